//! Planar points, poses, and the world ↔ agent frame transforms.
//!
//! The agent frame has its origin at the agent position and its +x axis
//! along the agent heading; +y points to the agent's left.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2D point in meters. Serialized as a two-element `[x, y]` array.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise rotation by `angle` radians about the origin.
    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Position plus heading of an agent in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Point2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Point2, heading: f64) -> Self {
        Self { position, heading }
    }

    fn check(&self) -> Result<()> {
        if self.position.is_finite() && self.heading.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite("agent pose"))
        }
    }
}

/// Express a world-frame point in the frame of `pose`.
pub fn to_agent_frame(world: Point2, pose: &Pose) -> Result<Point2> {
    pose.check()?;
    if !world.is_finite() {
        return Err(Error::NonFinite("world point"));
    }
    let d = world - pose.position;
    let (s, c) = pose.heading.sin_cos();
    Ok(Point2::new(c * d.x + s * d.y, -s * d.x + c * d.y))
}

/// Inverse of [`to_agent_frame`].
pub fn from_agent_frame(local: Point2, pose: &Pose) -> Result<Point2> {
    pose.check()?;
    if !local.is_finite() {
        return Err(Error::NonFinite("agent-frame point"));
    }
    let (s, c) = pose.heading.sin_cos();
    Ok(Point2::new(
        c * local.x - s * local.y + pose.position.x,
        s * local.x + c * local.y + pose.position.y,
    ))
}

/// Wrap an angle into (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    if !angle.is_finite() {
        return angle;
    }
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    // rem_euclid maps −π to π already; this catches values that round onto −π.
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Simple polygon as an ordered vertex ring (implicitly closed).
pub type Polygon = Vec<Point2>;

/// Corners of an oriented rectangle centered on `pose`, counter-clockwise.
pub fn oriented_box(pose: &Pose, length: f64, width: f64) -> Polygon {
    let (hl, hw) = (0.5 * length, 0.5 * width);
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
        .into_iter()
        .map(|(x, y)| Point2::new(x, y).rotate(pose.heading) + pose.position)
        .collect()
}
