//! Scene JSON import/export.
//!
//! The file is one array of instance objects:
//!
//! ```json
//! [{"timestamp": 0.0, "target_id": "ego",
//!   "agents": [{"id": "ego", "category": "target_vehicle",
//!               "history": [{"x": 0, "y": 0, "heading": 0, "speed": 2,
//!                            "accel": 0, "yaw_rate": 0}]}],
//!   "map": {"drivable_area": [[[x, y], ...]], "crosswalk": [], "walkway": []},
//!   "ground_truth": [[x, y], ...12 points]}]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::scene::{Agent, AgentState, Category, Instance, MapLayers, Scene, Trajectory};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    accel: f64,
    yaw_rate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    id: String,
    category: Category,
    history: Vec<RawState>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    timestamp: f64,
    target_id: String,
    agents: Vec<RawAgent>,
    map: MapLayers,
    ground_truth: Vec<Point2>,
}

/// Result of [`load_scenes`]: the instances plus how many kinematic values
/// had to be clamped into range.
#[derive(Debug, Clone)]
pub struct LoadedScenes {
    pub instances: Vec<Instance>,
    pub clamp_warnings: usize,
}

pub fn load_scenes(path: impl AsRef<Path>) -> Result<LoadedScenes> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    parse_scenes(&text).map_err(|e| match e {
        Error::Json { source, .. } => Error::Json {
            path: path.into(),
            source,
        },
        other => other,
    })
}

pub fn parse_scenes(text: &str) -> Result<LoadedScenes> {
    let records: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<input>".into(),
            source,
        })?;
    let mut instances = Vec::with_capacity(records.len());
    let mut clamp_warnings = 0;
    for (index, value) in records.into_iter().enumerate() {
        let raw: RawInstance =
            serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
                index,
                message: format!("field `{}`: {}", e.path(), e.inner()),
            })?;
        let (instance, clamps) = from_raw(raw).map_err(|e| Error::Schema {
            index,
            message: e.to_string(),
        })?;
        clamp_warnings += clamps;
        instances.push(instance);
    }
    Ok(LoadedScenes {
        instances,
        clamp_warnings,
    })
}

fn from_raw(raw: RawInstance) -> Result<(Instance, usize)> {
    let mut clamps = 0;
    let mut agents = Vec::with_capacity(raw.agents.len());
    for (ai, a) in raw.agents.into_iter().enumerate() {
        let mut history = Vec::with_capacity(a.history.len());
        for (si, s) in a.history.into_iter().enumerate() {
            let (state, n) = AgentState::new_counting_clamps(
                Point2::new(s.x, s.y),
                s.heading,
                s.speed,
                s.accel,
                s.yaw_rate,
                a.category,
            )
            .map_err(|e| Error::InvalidScene(format!("agents[{ai}].history[{si}]: {e}")))?;
            clamps += n;
            history.push(state);
        }
        agents.push(Agent {
            id: a.id,
            category: a.category,
            history,
        });
    }
    let scene = Scene::new(raw.map, agents, raw.target_id, raw.timestamp)?;
    let gt = Trajectory::prediction(raw.ground_truth)
        .map_err(|e| Error::InvalidTrajectory(format!("ground_truth: {e}")))?;
    Ok((Instance::new(scene, gt)?, clamps))
}

fn to_raw(inst: &Instance) -> RawInstance {
    let s = &inst.scene;
    RawInstance {
        timestamp: s.timestamp,
        target_id: s.target_id.clone(),
        agents: s
            .agents
            .iter()
            .map(|a| RawAgent {
                id: a.id.clone(),
                category: a.category,
                history: a
                    .history
                    .iter()
                    .map(|h| RawState {
                        x: h.position.x,
                        y: h.position.y,
                        heading: h.heading,
                        speed: h.speed,
                        accel: h.acceleration,
                        yaw_rate: h.yaw_rate,
                    })
                    .collect(),
            })
            .collect(),
        map: s.map.clone(),
        ground_truth: inst.ground_truth.points().to_vec(),
    }
}

/// Serialize instances in the scene JSON schema. Output is byte-stable.
pub fn scenes_to_json(instances: &[Instance]) -> String {
    let raw: Vec<RawInstance> = instances.iter().map(to_raw).collect();
    serde_json::to_string(&raw).expect("scene serialization cannot fail")
}

pub fn save_scenes(instances: &[Instance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scenes_to_json(instances)).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// SHA-256 of the canonical serialization, hex encoded.
pub fn dataset_hash(instances: &[Instance]) -> String {
    hex::encode(Sha256::digest(scenes_to_json(instances).as_bytes()))
}
