//! Displacement metrics for multi-modal predictions: ADE, minADE_k, FDE,
//! HitRate_{k,d}, and MSE for scalar regression targets.
//!
//! Top-k selection orders modes by descending probability, breaking ties by
//! the lower index. HitRate counts an instance as a hit when the best
//! max-point-wise distance among the top k is `<= d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::Trajectory;

pub fn ade(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_lengths(pred, gt)?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .points()
        .iter()
        .zip(gt.points())
        .map(|(a, b)| a.distance(*b))
        .sum();
    Ok(total / gt.len() as f64)
}

/// max over i of ‖a_i − b_i‖.
pub fn max_pointwise_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(a.points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| p.distance(*q))
        .fold(0.0, f64::max))
}

fn check_lengths(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Candidate trajectories with a probability per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    trajectories: Vec<Trajectory>,
    probabilities: Vec<f64>,
}

impl PredictionSet {
    pub fn new(trajectories: Vec<Trajectory>, probabilities: Vec<f64>) -> Result<Self> {
        if trajectories.len() != probabilities.len() {
            return Err(Error::InvalidArgument(format!(
                "{} trajectories but {} probabilities",
                trajectories.len(),
                probabilities.len()
            )));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        if !trajectories.is_empty() {
            let sum: f64 = probabilities.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "probabilities sum to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            trajectories,
            probabilities,
        })
    }

    /// A single deterministic prediction with probability one.
    pub fn single(trajectory: Trajectory) -> Self {
        Self {
            trajectories: vec![trajectory],
            probabilities: vec![1.0],
        }
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Mode indices by descending probability, ties to the lower index.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut r = self.ranked();
        r.truncate(k);
        r
    }

    pub fn most_likely(&self) -> Option<usize> {
        self.top_k(1).first().copied()
    }
}

pub fn min_ade_k(preds: &PredictionSet, gt: &Trajectory, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if preds.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    let mut best = f64::INFINITY;
    for i in preds.top_k(k) {
        best = best.min(ade(&preds.trajectories[i], gt)?);
    }
    Ok(best)
}

pub fn fde(preds: &PredictionSet, gt: &Trajectory) -> Result<f64> {
    let i = preds.most_likely().ok_or(Error::Empty("prediction set"))?;
    let pred = &preds.trajectories[i];
    check_lengths(pred, gt)?;
    match (pred.last(), gt.last()) {
        (Some(a), Some(b)) => Ok(a.distance(b)),
        _ => Ok(0.0),
    }
}

fn is_hit(preds: &PredictionSet, gt: &Trajectory, k: usize, d: f64) -> Result<bool> {
    for i in preds.top_k(k) {
        if max_pointwise_distance(&preds.trajectories[i], gt)? <= d {
            return Ok(true);
        }
    }
    Ok(false)
}

pub fn hit_rate(preds: &[PredictionSet], gts: &[Trajectory], k: usize, d: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prediction sets for {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("instance list"));
    }
    if k == 0 || !(d > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need k >= 1 and d > 0, got k={k} d={d}"
        )));
    }
    let mut hits = 0usize;
    for (p, g) in preds.iter().zip(gts) {
        if p.is_empty() {
            return Err(Error::Empty("prediction set"));
        }
        hits += is_hit(p, g, k, d)? as usize;
    }
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("series"));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Ranks kept per instance in an [`InstanceEval`]; bounds HitRate curves.
pub const EVAL_RANKS: usize = 25;

/// Per-instance summary sufficient to recompute every reported metric and
/// the HitRate-vs-k curve up to [`EVAL_RANKS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    /// ADE of each mode in probability-rank order.
    pub ade_by_rank: Vec<f64>,
    /// Max point-wise distance of each mode in probability-rank order.
    pub max_dist_by_rank: Vec<f64>,
    pub fde: f64,
}

impl InstanceEval {
    pub fn new(preds: &PredictionSet, gt: &Trajectory) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Empty("prediction set"));
        }
        let ranks = preds.top_k(EVAL_RANKS);
        let mut ade_by_rank = Vec::with_capacity(ranks.len());
        let mut max_dist_by_rank = Vec::with_capacity(ranks.len());
        for i in ranks {
            ade_by_rank.push(ade(&preds.trajectories[i], gt)?);
            max_dist_by_rank.push(max_pointwise_distance(&preds.trajectories[i], gt)?);
        }
        Ok(Self {
            ade_by_rank,
            max_dist_by_rank,
            fde: fde(preds, gt)?,
        })
    }

    pub fn min_ade(&self, k: usize) -> f64 {
        self.ade_by_rank
            .iter()
            .take(k.max(1))
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hit(&self, k: usize, d: f64) -> bool {
        self.max_dist_by_rank.iter().take(k).any(|&m| m <= d)
    }
}

/// HitRate at each k in 1..=k_max.
pub fn hitrate_curve(evals: &[InstanceEval], d: f64, k_max: usize) -> Vec<(usize, f64)> {
    (1..=k_max)
        .map(|k| {
            let rate = if evals.is_empty() {
                0.0
            } else {
                evals.iter().filter(|e| e.hit(k, d)).count() as f64 / evals.len() as f64
            };
            (k, rate)
        })
        .collect()
}

/// The standard metric columns: minADE_{1,5,10}, FDE, HitRate_{5,2m}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub minade1: f64,
    pub minade5: f64,
    pub minade10: f64,
    pub fde: f64,
    pub hitrate_5_2m: f64,
    pub instances: Vec<InstanceEval>,
}

impl MetricReport {
    pub fn from_evals(instances: Vec<InstanceEval>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::Empty("instance list"));
        }
        let n = instances.len() as f64;
        let mean = |f: &dyn Fn(&InstanceEval) -> f64| instances.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            minade1: mean(&|e| e.min_ade(1)),
            minade5: mean(&|e| e.min_ade(5)),
            minade10: mean(&|e| e.min_ade(10)),
            fde: mean(&|e| e.fde),
            hitrate_5_2m: mean(&|e| if e.hit(5, 2.0) { 1.0 } else { 0.0 }),
            instances,
        })
    }

    pub fn evaluate(preds: &[PredictionSet], gts: &[Trajectory]) -> Result<Self> {
        if preds.len() != gts.len() {
            return Err(Error::InvalidArgument(
                "prediction and ground truth counts differ".into(),
            ));
        }
        let evals = preds
            .iter()
            .zip(gts)
            .map(|(p, g)| InstanceEval::new(p, g))
            .collect::<Result<Vec<_>>>()?;
        Self::from_evals(evals)
    }
}
