//! Fixed candidate trajectory set built by greedy ε-cover.
//!
//! Every source trajectory lies within `epsilon` (max point-wise distance)
//! of some set element. Construction repeatedly takes the input covering the
//! most still-uncovered inputs, lowest index first on ties.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::metrics::{ade, max_pointwise_distance};
use crate::scene::{Trajectory, DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMetric {
    MaxPointwise,
    /// Average displacement; the default for training labels.
    #[default]
    MeanPointwise,
}

impl MatchMetric {
    pub fn distance(self, a: &Trajectory, b: &Trajectory) -> Result<f64> {
        match self {
            MatchMetric::MaxPointwise => max_pointwise_distance(a, b),
            MatchMetric::MeanPointwise => ade(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    elements: Vec<Trajectory>,
    epsilon: f64,
    source_hash: String,
}

/// SHA-256 over the little-endian coordinates of every input, in order.
pub fn fingerprint(trajectories: &[Trajectory]) -> String {
    let mut h = Sha256::new();
    for t in trajectories {
        h.update((t.len() as u64).to_le_bytes());
        for p in t.points() {
            h.update(p.x.to_le_bytes());
            h.update(p.y.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn build_cover(trajectories: &[Trajectory], epsilon: f64) -> Result<TrajectorySet> {
    if trajectories.is_empty() {
        return Err(Error::Empty("trajectory corpus"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = trajectories.len();
    // balls[i] = inputs within epsilon of input i (always includes i).
    let mut balls: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        balls[i].push(i);
        for j in (i + 1)..n {
            if max_pointwise_distance(&trajectories[i], &trajectories[j])? <= epsilon {
                balls[i].push(j);
                balls[j].push(i);
            }
        }
    }
    let mut covered = vec![false; n];
    let mut gain: Vec<usize> = balls.iter().map(Vec::len).collect();
    let mut remaining = n;
    let mut chosen = Vec::new();
    while remaining > 0 {
        // max_by_key keeps the last maximum, so scan manually for the first.
        let mut best = 0;
        for i in 1..n {
            if gain[i] > gain[best] {
                best = i;
            }
        }
        debug_assert!(gain[best] > 0);
        chosen.push(best);
        for &j in &balls[best] {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
                for &m in &balls[j] {
                    gain[m] -= 1;
                }
            }
        }
    }
    Ok(TrajectorySet {
        elements: chosen
            .into_iter()
            .map(|i| trajectories[i].clone())
            .collect(),
        epsilon,
        source_hash: fingerprint(trajectories),
    })
}

impl TrajectorySet {
    /// Assemble a set from explicit elements (e.g. a hand-built catalog).
    pub fn from_elements(
        elements: Vec<Trajectory>,
        epsilon: f64,
        source_hash: String,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Empty("trajectory set"));
        }
        let len = elements[0].len();
        if let Some(bad) = elements.iter().find(|e| e.len() != len) {
            return Err(Error::LengthMismatch {
                left: len,
                right: bad.len(),
            });
        }
        Ok(Self {
            elements,
            epsilon,
            source_hash,
        })
    }

    pub fn elements(&self) -> &[Trajectory] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    /// Index of the element nearest `gt` under `metric`; lowest index on ties.
    pub fn closest_element(&self, gt: &Trajectory, metric: MatchMetric) -> Result<usize> {
        let mut best = (f64::INFINITY, 0);
        for (i, e) in self.elements.iter().enumerate() {
            let d = metric.distance(e, gt)?;
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(best.1)
    }

    /// True when every trajectory is within epsilon of some element.
    pub fn covers(&self, trajectories: &[Trajectory]) -> Result<bool> {
        for t in trajectories {
            let mut hit = false;
            for e in &self.elements {
                if max_pointwise_distance(e, t)? <= self.epsilon {
                    hit = true;
                    break;
                }
            }
            if !hit {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn to_json(&self) -> String {
        let file = SetFile {
            epsilon: self.epsilon,
            source_hash: self.source_hash.clone(),
            elements: self.elements.iter().map(|e| e.points().to_vec()).collect(),
        };
        serde_json::to_string(&file).expect("set serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SetFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<input>".into(),
            source,
        })?;
        let elements = file
            .elements
            .into_iter()
            .map(|pts| Trajectory::new(pts, DT))
            .collect::<Result<Vec<_>>>()?;
        Self::from_elements(elements, file.epsilon, file.source_hash)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.into(),
                source,
            },
            other => other,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SetFile {
    epsilon: f64,
    source_hash: String,
    elements: Vec<Vec<Point2>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(speed: f64, lateral: f64) -> Trajectory {
        Trajectory::prediction(
            (1..=12)
                .map(|i| Point2::new(speed * 0.5 * i as f64, lateral))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_inputs_collapse() {
        let set = build_cover(&vec![straight(3.0, 0.0); 5], 1.0).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn epsilon_against_gap() {
        let pair = [straight(1.0, 0.0), straight(1.01, 0.0)];
        assert_eq!(build_cover(&pair, 1.0).unwrap().len(), 1);
        assert_eq!(build_cover(&pair, 0.01).unwrap().len(), 2);
    }

    #[test]
    fn far_apart_inputs_all_kept() {
        let inputs: Vec<_> = (0..6).map(|i| straight(2.0, 10.0 * i as f64)).collect();
        let set = build_cover(&inputs, 2.0).unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(set.elements(), &inputs[..]);
    }

    #[test]
    fn greedy_prefers_central_element() {
        // Middle lane covers both neighbours at eps 1.5; outer lanes do not cover each other.
        let inputs = vec![straight(2.0, -1.0), straight(2.0, 0.0), straight(2.0, 1.0)];
        let set = build_cover(&inputs, 1.5).unwrap();
        assert_eq!(set.elements(), &[straight(2.0, 0.0)]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_cover(&[], 1.0).is_err());
        assert!(build_cover(&[straight(1.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn closest_examples() {
        let gt = straight(2.0, 0.0);
        let elements: Vec<_> = (0..6)
            .map(|i| straight(2.0, 3.0 * i as f64 - 9.0))
            .collect();
        let set = TrajectorySet::from_elements(elements, 1.0, String::new()).unwrap();
        for m in [MatchMetric::MaxPointwise, MatchMetric::MeanPointwise] {
            assert_eq!(set.closest_element(&gt, m).unwrap(), 3);
        }
        let set = TrajectorySet::from_elements(
            vec![straight(2.0, 0.1), straight(2.0, 5.0)],
            1.0,
            String::new(),
        )
        .unwrap();
        assert_eq!(
            set.closest_element(&gt, MatchMetric::MeanPointwise)
                .unwrap(),
            0
        );
    }

    #[test]
    fn json_round_trip() {
        let set = build_cover(&[straight(1.0, 0.0), straight(4.0, 0.0)], 0.5).unwrap();
        let back = TrajectorySet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
        assert!(set
            .to_json()
            .starts_with("{\"epsilon\":0.5,\"source_hash\":\""));
    }
}
