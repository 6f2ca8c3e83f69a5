//! Deterministic synthetic scenes.
//!
//! Each instance places a target vehicle at a random world pose and gives it
//! one maneuver (straight, constant turn, or braking to a stop). Histories and
//! ground truth are exact kinematic rollouts of that maneuver; ground truth
//! additionally carries i.i.d. Gaussian noise. The drivable corridor follows
//! the maneuver's path so the map is informative about the future.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{position_at, Kinematics, PhysicsModel};
use crate::error::{Error, Result};
use crate::geometry::{from_agent_frame, Point2, Polygon, Pose};
use crate::scene::{
    Agent, AgentState, Category, Instance, MapLayers, Scene, Trajectory, DT, HISTORY_LEN, HORIZON,
};

pub const TARGET_ID: &str = "target";

const LANE_HALF_WIDTH: f64 = 3.5;
const WALKWAY_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    Turn,
    Stop,
}

/// Relative sampling weights of the three maneuvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverMix {
    pub straight: f64,
    pub turn: f64,
    pub stop: f64,
}

impl ManeuverMix {
    pub fn only(m: Maneuver) -> Self {
        let mut mix = ManeuverMix {
            straight: 0.0,
            turn: 0.0,
            stop: 0.0,
        };
        match m {
            Maneuver::Straight => mix.straight = 1.0,
            Maneuver::Turn => mix.turn = 1.0,
            Maneuver::Stop => mix.stop = 1.0,
        }
        mix
    }

    fn sample(&self, rng: &mut impl Rng) -> Maneuver {
        let total = self.straight + self.turn + self.stop;
        let u = rng.random::<f64>() * total;
        if u < self.straight {
            Maneuver::Straight
        } else if u < self.straight + self.turn {
            Maneuver::Turn
        } else {
            Maneuver::Stop
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    /// Inclusive range for the number of non-target agents.
    pub other_agents: (usize, usize),
    pub mix: ManeuverMix,
    /// Standard deviation of ground-truth noise, meters.
    pub noise_sigma: f64,
    /// Inclusive target speed range, m/s.
    pub speed_range: (f64, f64),
    /// Turn-rate magnitude range, rad/s.
    pub yaw_rate_range: (f64, f64),
    /// Braking deceleration magnitude range, m/s².
    pub decel_range: (f64, f64),
    /// History states recorded for the target (1..=5).
    pub target_history: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 2000,
            other_agents: (0, 4),
            mix: ManeuverMix {
                straight: 0.4,
                turn: 0.4,
                stop: 0.2,
            },
            noise_sigma: 0.1,
            speed_range: (2.0, 14.0),
            yaw_rate_range: (0.05, 0.35),
            decel_range: (1.0, 4.0),
            target_history: HISTORY_LEN,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("synth config: {msg}")));
        let m = &self.mix;
        if [m.straight, m.turn, m.stop].iter().any(|w| !(*w >= 0.0))
            || m.straight + m.turn + m.stop <= 0.0
        {
            return bad("maneuver weights must be nonnegative with a positive sum");
        }
        if self.other_agents.0 > self.other_agents.1 {
            return bad("other_agents range is empty");
        }
        for (lo, hi) in [self.speed_range, self.yaw_rate_range, self.decel_range] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad("kinematic ranges need 0 <= lo <= hi");
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be nonnegative");
        }
        if !(1..=HISTORY_LEN).contains(&self.target_history) {
            return bad("target_history must be in 1..=5");
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Vec<Instance>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.count)
        .map(|i| generate_one(config, i, &mut rng))
        .collect()
}

fn generate_one(config: &SynthConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<Instance> {
    let pose = Pose::new(
        Point2::new(
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
        ),
        rng.random_range(-PI..PI),
    );
    let maneuver = config.mix.sample(rng);
    let speed = uniform(rng, config.speed_range);
    let (model, kin) = match maneuver {
        Maneuver::Straight => (
            PhysicsModel::CV,
            Kinematics {
                speed,
                acceleration: 0.0,
                yaw_rate: 0.0,
            },
        ),
        Maneuver::Turn => {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let w = sign * uniform(rng, config.yaw_rate_range);
            (
                PhysicsModel::CTRV,
                Kinematics {
                    speed,
                    acceleration: 0.0,
                    yaw_rate: w,
                },
            )
        }
        Maneuver::Stop => {
            let a = -uniform(rng, config.decel_range);
            (
                PhysicsModel::CA,
                Kinematics {
                    speed,
                    acceleration: a,
                    yaw_rate: 0.0,
                },
            )
        }
    };

    let target = Agent {
        id: TARGET_ID.to_string(),
        category: Category::TargetVehicle,
        history: rollout_history(
            &pose,
            model,
            &kin,
            config.target_history,
            Category::TargetVehicle,
        )?,
    };

    let noise = if config.noise_sigma > 0.0 {
        Some(Normal::new(0.0, config.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    let gt_points = (1..=HORIZON)
        .map(|i| {
            let p = position_at(model, &kin, i as f64 * DT);
            match &noise {
                Some(n) => Point2::new(p.x + n.sample(rng), p.y + n.sample(rng)),
                None => p,
            }
        })
        .collect();
    let ground_truth = Trajectory::prediction(gt_points)?;

    let map = corridor_map(&pose, &kin, rng)?;

    let n_others = rng.random_range(config.other_agents.0..=config.other_agents.1);
    let mut agents = Vec::with_capacity(n_others + 1);
    agents.push(target);
    for j in 0..n_others {
        agents.push(other_agent(&pose, j, rng)?);
    }

    let scene = Scene::new(map, agents, TARGET_ID.to_string(), index as f64 * 20.0)?;
    Instance::new(scene, ground_truth)
}

/// States at ages (len−1)·0.5 s .. 0 s, oldest first, in the world frame.
fn rollout_history(
    pose: &Pose,
    model: PhysicsModel,
    kin: &Kinematics,
    len: usize,
    category: Category,
) -> Result<Vec<AgentState>> {
    (0..len)
        .rev()
        .map(|age| {
            let t = -(age as f64) * DT;
            let local = position_at(model, kin, t);
            let (accel, yaw_rate) = match model {
                PhysicsModel::CV => (0.0, 0.0),
                PhysicsModel::CA => (kin.acceleration, 0.0),
                PhysicsModel::CTRV => (0.0, kin.yaw_rate),
                PhysicsModel::CTRA => (kin.acceleration, kin.yaw_rate),
            };
            AgentState::new(
                from_agent_frame(local, pose)?,
                pose.heading + yaw_rate * t,
                (kin.speed + accel * t).max(0.0),
                accel,
                yaw_rate,
                category,
            )
        })
        .collect()
}

/// Drivable corridor along the maneuver path, walkways on both sides, and
/// sometimes a crosswalk across the corridor ahead.
fn corridor_map(pose: &Pose, kin: &Kinematics, rng: &mut impl Rng) -> Result<MapLayers> {
    let curvature = if kin.speed > 0.5 {
        kin.yaw_rate / kin.speed
    } else {
        0.0
    };
    let ahead = if curvature.abs() > 1e-9 {
        (PI / curvature.abs()).min(70.0)
    } else {
        70.0
    };
    let behind = 25.0;
    let step = 2.0;
    let n = ((ahead + behind) / step).ceil() as usize;
    let center: Vec<(Point2, f64)> = (0..=n)
        .map(|i| {
            let s = -behind + i as f64 * step;
            (arc_point(curvature, s), curvature * s)
        })
        .collect();

    let offset = |lateral: f64| -> Vec<Point2> {
        center
            .iter()
            .map(|&(p, th)| p + Point2::new(-th.sin(), th.cos()) * lateral)
            .collect()
    };
    let band = |inner: f64, outer: f64| -> Polygon {
        let mut ring = offset(outer);
        ring.extend(offset(inner).into_iter().rev());
        ring
    };

    let mut layers = MapLayers {
        drivable_area: vec![band(-LANE_HALF_WIDTH, LANE_HALF_WIDTH)],
        walkway: vec![
            band(LANE_HALF_WIDTH, LANE_HALF_WIDTH + WALKWAY_WIDTH),
            band(-LANE_HALF_WIDTH - WALKWAY_WIDTH, -LANE_HALF_WIDTH),
        ],
        crosswalk: Vec::new(),
    };
    if rng.random::<bool>() {
        let s = rng.random_range(6.0..(ahead.min(30.0)).max(6.5));
        let (a, b) = (s - 1.5, s + 1.5);
        let w = LANE_HALF_WIDTH + WALKWAY_WIDTH;
        let corner = |s: f64, lat: f64| {
            let th = curvature * s;
            arc_point(curvature, s) + Point2::new(-th.sin(), th.cos()) * lat
        };
        layers.crosswalk.push(vec![
            corner(a, w),
            corner(b, w),
            corner(b, -w),
            corner(a, -w),
        ]);
    }

    let to_world = |poly: &Polygon| -> Result<Polygon> {
        poly.iter().map(|&p| from_agent_frame(p, pose)).collect()
    };
    Ok(MapLayers {
        drivable_area: layers
            .drivable_area
            .iter()
            .map(to_world)
            .collect::<Result<_>>()?,
        crosswalk: layers
            .crosswalk
            .iter()
            .map(to_world)
            .collect::<Result<_>>()?,
        walkway: layers.walkway.iter().map(to_world).collect::<Result<_>>()?,
    })
}

/// Point at arc length `s` along a path of constant curvature from the origin.
fn arc_point(curvature: f64, s: f64) -> Point2 {
    if curvature.abs() < 1e-9 {
        return Point2::new(s, 0.0);
    }
    let th = curvature * s;
    Point2::new(
        th.sin() / curvature,
        2.0 * (0.5 * th).sin().powi(2) / curvature,
    )
}

fn other_agent(target: &Pose, j: usize, rng: &mut impl Rng) -> Result<Agent> {
    let category = if rng.random::<f64>() < 0.7 {
        Category::OtherVehicle
    } else {
        Category::Pedestrian
    };
    let local = loop {
        let p = Point2::new(rng.random_range(-15.0..25.0), rng.random_range(-12.0..12.0));
        if p.x.abs() > 4.0 || p.y.abs() > 3.0 {
            break p;
        }
    };
    let heading = target.heading + rng.random_range(-PI..PI);
    let speed = match category {
        Category::Pedestrian => rng.random_range(0.0..1.5),
        _ => rng.random_range(0.0..10.0),
    };
    let len = rng.random_range(1..=HISTORY_LEN);
    let pose = Pose::new(from_agent_frame(local, target)?, heading);
    let kin = Kinematics {
        speed,
        acceleration: 0.0,
        yaw_rate: 0.0,
    };
    Ok(Agent {
        id: format!("agent-{j}"),
        category,
        history: rollout_history(&pose, PhysicsModel::CV, &kin, len, category)?,
    })
}
