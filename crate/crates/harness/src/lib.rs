//! Ablation orchestration, reports and plots for trajectory prediction experiments.

pub mod ablation;
pub mod config;
pub mod error;
pub mod plot;
pub mod report;

pub use ablation::{prepare_data, run_ablation, OutputLayout, PreparedData, RunRecord};
pub use config::{ArmSpec, DatasetSpec, ExperimentConfig, TrajsetSpec};
pub use error::{Error, Result};
pub use plot::{hitrate_curves, hitrate_svg, overlay_svg, ArmTrajectory};
pub use report::{baseline_rows, load_records, median, report_rows, ReportRow};
