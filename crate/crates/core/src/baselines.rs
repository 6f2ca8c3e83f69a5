//! Kinematic rollouts and the two physics baselines: constant velocity and
//! the physics oracle (best of CV, CA, CTRV and CTRA against ground truth).

use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::metrics::ade;
use crate::scene::{Instance, Trajectory, DT, HORIZON};

/// Below this turn rate the arc models use their straight-line limit.
pub const MIN_YAW_RATE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhysicsModel {
    /// Constant velocity.
    CV,
    /// Constant acceleration, speed floored at zero.
    CA,
    /// Constant turn rate and velocity.
    CTRV,
    /// Constant turn rate and acceleration.
    CTRA,
}

impl PhysicsModel {
    /// Oracle candidates in tie-break order.
    pub const ALL: [PhysicsModel; 4] = [
        PhysicsModel::CV,
        PhysicsModel::CA,
        PhysicsModel::CTRV,
        PhysicsModel::CTRA,
    ];
}

/// Inputs to a rollout: the agent's own-frame kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub speed: f64,
    pub acceleration: f64,
    pub yaw_rate: f64,
}

/// Position at time `t` in the agent frame for the given model.
pub fn position_at(model: PhysicsModel, k: &Kinematics, t: f64) -> Point2 {
    let (accel, yaw_rate) = match model {
        PhysicsModel::CV => (0.0, 0.0),
        PhysicsModel::CA => (k.acceleration, 0.0),
        PhysicsModel::CTRV => (0.0, k.yaw_rate),
        PhysicsModel::CTRA => (k.acceleration, k.yaw_rate),
    };
    // Speed is floored at zero: the agent stops and stays put.
    let t_move = if accel < 0.0 {
        t.min(k.speed / -accel)
    } else {
        t
    };
    if t < 0.0 {
        // Backwards in time (used to synthesize histories): no floor applies.
        return arc_position(k.speed, accel, yaw_rate, t);
    }
    arc_position(k.speed, accel, yaw_rate, t_move)
}

/// Closed-form integral of (v + a·τ)·(cos ωτ, sin ωτ) over [0, t].
fn arc_position(v: f64, a: f64, w: f64, t: f64) -> Point2 {
    if w.abs() < MIN_YAW_RATE {
        return Point2::new(v * t + 0.5 * a * t * t, 0.0);
    }
    let u = w * t;
    let (s, c) = u.sin_cos();
    let half = (0.5 * u).sin();
    // 1 − cos u = 2 sin²(u/2) avoids cancellation for small turn rates.
    let one_minus_cos = 2.0 * half * half;
    let x = v * s / w + a * (t * s / w - one_minus_cos / (w * w));
    let y = v * one_minus_cos / w + a * (s - u * c) / (w * w);
    Point2::new(x, y)
}

/// Roll a model forward over the 12-step, 0.5 s prediction horizon.
pub fn rollout(model: PhysicsModel, k: &Kinematics) -> Trajectory {
    let points = (1..=HORIZON)
        .map(|i| position_at(model, k, i as f64 * DT))
        .collect();
    Trajectory::prediction(points).expect("finite kinematics produce a finite rollout")
}

fn target_kinematics(instance: &Instance) -> Kinematics {
    let s = instance.target_state();
    Kinematics {
        speed: s.speed,
        acceleration: s.acceleration,
        yaw_rate: s.yaw_rate,
    }
}

pub fn constant_velocity_baseline(instance: &Instance) -> Trajectory {
    rollout(PhysicsModel::CV, &target_kinematics(instance))
}

/// Best rollout by ADE against the ground truth; ties go to the earlier model.
pub fn physics_oracle(instance: &Instance) -> (PhysicsModel, Trajectory) {
    let k = target_kinematics(instance);
    let mut best: Option<(f64, PhysicsModel, Trajectory)> = None;
    for model in PhysicsModel::ALL {
        let traj = rollout(model, &k);
        let err = ade(&traj, &instance.ground_truth).expect("rollouts match the horizon");
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, model, traj));
        }
    }
    let (_, model, traj) = best.expect("four candidates");
    (model, traj)
}
