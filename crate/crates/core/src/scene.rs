//! Domain types: agent states, trajectories, scenes and prediction instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point2, Polygon, Pose};

pub const MAX_SPEED: f64 = 30.0;
pub const MAX_ACCEL: f64 = 25.0;
pub const MAX_YAW_RATE: f64 = 2.0 * std::f64::consts::PI;

/// Number of future points in a prediction target (6 s at 2 Hz).
pub const HORIZON: usize = 12;
/// Sample spacing of histories and trajectories, seconds.
pub const DT: f64 = 0.5;
/// History window: 4 past states plus the current one.
pub const HISTORY_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TargetVehicle,
    OtherVehicle,
    Pedestrian,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::TargetVehicle => "target_vehicle",
            Category::OtherVehicle => "other_vehicle",
            Category::Pedestrian => "pedestrian",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_vehicle" => Ok(Category::TargetVehicle),
            "other_vehicle" => Ok(Category::OtherVehicle),
            "pedestrian" => Ok(Category::Pedestrian),
            other => Err(Error::InvalidArgument(format!(
                "unknown category {other:?}"
            ))),
        }
    }
}

/// Kinematic snapshot of one agent in the world frame.
///
/// Construction clamps speed, acceleration and yaw rate into their
/// admissible ranges and wraps the heading into (−π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Point2,
    pub heading: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub yaw_rate: f64,
    pub category: Category,
}

impl AgentState {
    pub fn new(
        position: Point2,
        heading: f64,
        speed: f64,
        acceleration: f64,
        yaw_rate: f64,
        category: Category,
    ) -> Result<Self> {
        Self::new_counting_clamps(position, heading, speed, acceleration, yaw_rate, category)
            .map(|(s, _)| s)
    }

    /// Like [`AgentState::new`], also reporting how many fields were clamped.
    pub fn new_counting_clamps(
        position: Point2,
        heading: f64,
        speed: f64,
        acceleration: f64,
        yaw_rate: f64,
        category: Category,
    ) -> Result<(Self, usize)> {
        if !position.is_finite() {
            return Err(Error::NonFinite("agent position"));
        }
        for (v, what) in [
            (heading, "heading"),
            (speed, "speed"),
            (acceleration, "acceleration"),
            (yaw_rate, "yaw_rate"),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(what));
            }
        }
        let mut clamps = 0;
        let mut clamp = |v: f64, lo: f64, hi: f64| {
            let c = v.clamp(lo, hi);
            if c != v {
                clamps += 1;
            }
            c
        };
        let state = AgentState {
            position,
            heading: normalize_angle(heading),
            speed: clamp(speed, 0.0, MAX_SPEED),
            acceleration: clamp(acceleration, -MAX_ACCEL, MAX_ACCEL),
            yaw_rate: clamp(yaw_rate, -MAX_YAW_RATE, MAX_YAW_RATE),
            category,
        };
        Ok((state, clamps))
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.heading)
    }

    pub fn state_vector(&self) -> StateVector {
        StateVector {
            speed: self.speed,
            acceleration: self.acceleration,
            yaw_rate: self.yaw_rate,
        }
    }
}

/// The target agent's kinematic state as fed to the networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub speed: f64,
    pub acceleration: f64,
    pub yaw_rate: f64,
}

impl StateVector {
    /// Each component divided by its range bound, so values lie in [−1, 1].
    pub fn normalized(&self) -> [f64; 3] {
        [
            self.speed / MAX_SPEED,
            self.acceleration / MAX_ACCEL,
            self.yaw_rate / MAX_YAW_RATE,
        ]
    }
}

/// Fixed-rate sequence of positions, usually in an agent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<Point2>,
    dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point2>, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTrajectory(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("point {i} is not finite")));
        }
        Ok(Self { points, dt })
    }

    /// A prediction-horizon trajectory: exactly 12 points at 0.5 s.
    pub fn prediction(points: Vec<Point2>) -> Result<Self> {
        if points.len() != HORIZON {
            return Err(Error::InvalidTrajectory(format!(
                "expected {HORIZON} points, got {}",
                points.len()
            )));
        }
        Self::new(points, DT)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<Point2> {
        self.points.last().copied()
    }

    pub fn is_prediction(&self) -> bool {
        self.points.len() == HORIZON && self.dt == DT
    }

    /// Apply a point map to every element, keeping dt.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Result<Trajectory> {
        Trajectory::new(self.points.iter().map(|&p| f(p)).collect(), self.dt)
    }

    /// Flattened `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn from_flat(flat: &[f64], dt: f64) -> Result<Trajectory> {
        if flat.len() % 2 != 0 {
            return Err(Error::InvalidTrajectory("odd coordinate count".into()));
        }
        Trajectory::new(
            flat.chunks(2).map(|c| Point2::new(c[0], c[1])).collect(),
            dt,
        )
    }
}

/// Semantic map polygons, world frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapLayers {
    #[serde(default)]
    pub drivable_area: Vec<Polygon>,
    #[serde(default)]
    pub crosswalk: Vec<Polygon>,
    #[serde(default)]
    pub walkway: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub category: Category,
    /// Time-ordered, oldest first; the last entry is the current state.
    pub history: Vec<AgentState>,
}

impl Agent {
    pub fn current(&self) -> &AgentState {
        self.history.last().expect("agent history is never empty")
    }

    /// History padded to [`HISTORY_LEN`] states by repeating the oldest one.
    pub fn padded_history(&self) -> Vec<AgentState> {
        let missing = HISTORY_LEN.saturating_sub(self.history.len());
        std::iter::repeat_n(self.history[0], missing)
            .chain(self.history.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub map: MapLayers,
    pub agents: Vec<Agent>,
    pub target_id: String,
    pub timestamp: f64,
}

impl Scene {
    pub fn new(
        map: MapLayers,
        agents: Vec<Agent>,
        target_id: String,
        timestamp: f64,
    ) -> Result<Self> {
        let scene = Scene {
            map,
            agents,
            target_id,
            timestamp,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(Error::NonFinite("timestamp"));
        }
        if self.target_index().is_none() {
            return Err(Error::InvalidScene(format!(
                "target_id {:?} not among agents",
                self.target_id
            )));
        }
        for a in &self.agents {
            if a.history.is_empty() || a.history.len() > HISTORY_LEN {
                return Err(Error::InvalidScene(format!(
                    "agent {:?} has {} history states, expected 1..={HISTORY_LEN}",
                    a.id,
                    a.history.len()
                )));
            }
        }
        for layer in [
            &self.map.drivable_area,
            &self.map.crosswalk,
            &self.map.walkway,
        ] {
            if layer.iter().flatten().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite("map polygon"));
            }
        }
        Ok(())
    }

    pub fn target_index(&self) -> Option<usize> {
        self.agents.iter().position(|a| a.id == self.target_id)
    }

    pub fn target(&self) -> &Agent {
        &self.agents[self.target_index().expect("validated scene has a target")]
    }
}

/// One prediction problem: a scene plus the target's future in its own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub scene: Scene,
    pub ground_truth: Trajectory,
}

impl Instance {
    pub fn new(scene: Scene, ground_truth: Trajectory) -> Result<Self> {
        scene.validate()?;
        if !ground_truth.is_prediction() {
            return Err(Error::InvalidTrajectory(format!(
                "ground truth must have {HORIZON} points at dt {DT}"
            )));
        }
        Ok(Instance {
            scene,
            ground_truth,
        })
    }

    pub fn target_state(&self) -> &AgentState {
        self.scene.target().current()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(speed: f64) -> AgentState {
        AgentState::new(
            Point2::ORIGIN,
            0.0,
            speed,
            0.0,
            0.0,
            Category::TargetVehicle,
        )
        .unwrap()
    }

    #[test]
    fn clamps_kinematics() {
        let (s, n) = AgentState::new_counting_clamps(
            Point2::ORIGIN,
            7.0,
            99.0,
            -40.0,
            1.0,
            Category::OtherVehicle,
        )
        .unwrap();
        assert_eq!(s.speed, 30.0);
        assert_eq!(s.acceleration, -25.0);
        assert_eq!(s.yaw_rate, 1.0);
        assert_eq!(n, 2);
        assert!(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI);
    }

    #[test]
    fn rejects_nan_state() {
        assert!(AgentState::new(
            Point2::ORIGIN,
            0.0,
            f64::NAN,
            0.0,
            0.0,
            Category::Pedestrian
        )
        .is_err());
    }

    #[test]
    fn state_vector_normalization() {
        let s = AgentState::new(
            Point2::ORIGIN,
            0.0,
            15.0,
            -25.0,
            MAX_YAW_RATE,
            Category::TargetVehicle,
        )
        .unwrap();
        assert_eq!(s.state_vector().normalized(), [0.5, -1.0, 1.0]);
    }

    #[test]
    fn prediction_trajectory_shape() {
        let pts: Vec<_> = (1..=12).map(|i| Point2::new(i as f64, 0.0)).collect();
        assert!(Trajectory::prediction(pts.clone()).unwrap().is_prediction());
        assert!(Trajectory::prediction(pts[..11].to_vec()).is_err());
        let mut bad = pts;
        bad[3].y = f64::INFINITY;
        assert!(Trajectory::prediction(bad).is_err());
    }

    #[test]
    fn padding_repeats_oldest() {
        let agent = Agent {
            id: "a".into(),
            category: Category::TargetVehicle,
            history: vec![state(1.0), state(2.0)],
        };
        let padded = agent.padded_history();
        let speeds: Vec<_> = padded.iter().map(|s| s.speed).collect();
        assert_eq!(speeds, vec![1.0, 1.0, 1.0, 1.0, 2.0]);
        assert_eq!(agent.current().speed, 2.0);
    }

    #[test]
    fn scene_requires_target() {
        let agent = Agent {
            id: "a".into(),
            category: Category::TargetVehicle,
            history: vec![state(1.0)],
        };
        assert!(Scene::new(MapLayers::default(), vec![agent.clone()], "b".into(), 0.0).is_err());
        assert!(Scene::new(MapLayers::default(), vec![agent], "a".into(), 0.0).is_ok());
    }

    #[test]
    fn scene_history_bounds() {
        let agent = Agent {
            id: "a".into(),
            category: Category::TargetVehicle,
            history: vec![state(1.0); 6],
        };
        assert!(Scene::new(MapLayers::default(), vec![agent], "a".into(), 0.0).is_err());
    }
}
