//! Scenes, rasterization, trajectory sets, physics baselines and metrics
//! for multi-modal trajectory prediction.

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod scene;
pub mod synth;
pub mod trajset;

pub use error::{Error, Result};
pub use geometry::{from_agent_frame, to_agent_frame, Point2, Pose};
pub use metrics::{MetricReport, PredictionSet};
pub use raster::{rasterize, Palette, Raster, RasterConfig};
pub use scene::{AgentState, Instance, Scene, StateVector, Trajectory};
pub use trajset::{build_cover, MatchMetric, TrajectorySet};
