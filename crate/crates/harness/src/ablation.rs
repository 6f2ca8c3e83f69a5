//! End-to-end ablation: data, split, trajectory set, pretraining, fine-tuning
//! every arm for every seed, then records, report and plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use trajkit_core::io::{load_scenes, save_scenes};
use trajkit_core::metrics::MetricReport;
use trajkit_core::raster::{Palette, RasterConfig};
use trajkit_core::scene::{Instance, Trajectory};
use trajkit_core::synth::generate_synthetic;
use trajkit_core::trajset::{build_cover, TrajectorySet};
use trajkit_models::{
    finetune, predict_all, prepare_samples, pretrain_encoder, EncoderInit, FinetuneConfig,
    PretrainExample,
};

use crate::config::{split_indices, DatasetSpec, ExperimentConfig, TrajsetSpec};
use crate::error::{Error, Result};
use crate::plot::{hitrate_svg, overlay_svg, ArmTrajectory};
use crate::report::{report_rows, write_csv};

pub const RASTER_RESOLUTION: f64 = 0.5;

/// Outcome of one (arm, seed) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub arm: String,
    pub report: MetricReport,
    pub losses: Vec<f64>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn file_name(arm: &str, seed: u64) -> String {
        format!("{arm}_seed{seed}.json")
    }
}

/// Dataset, split and trajectory set shared by every arm.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub instances: Vec<Instance>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub set: TrajectorySet,
}

impl PreparedData {
    pub fn subset(&self, indices: &[usize]) -> Vec<Instance> {
        indices.iter().map(|&i| self.instances[i].clone()).collect()
    }
}

pub fn raster_config(cfg: &ExperimentConfig) -> RasterConfig {
    RasterConfig::square(cfg.training.model.encoder.input_size, RASTER_RESOLUTION)
}

/// Load or generate the dataset, split it, and load or build the trajectory set.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let instances = match &cfg.dataset {
        DatasetSpec::Path { path } => load_scenes(path)?.instances,
        DatasetSpec::Synthetic { synthetic, seed } => generate_synthetic(synthetic, *seed)?,
    };
    let [train, val, test] = split_indices(instances.len());
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "{} instances leave an empty train or test split",
            instances.len()
        )));
    }
    let set = match &cfg.trajset {
        TrajsetSpec::Path { path } => TrajectorySet::load(path)?,
        TrajsetSpec::Build { epsilon } => {
            let gts: Vec<Trajectory> = train
                .iter()
                .map(|&i| instances[i].ground_truth.clone())
                .collect();
            build_cover(&gts, *epsilon)?
        }
    };
    Ok(PreparedData {
        instances,
        train,
        val,
        test,
        set,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Paths of everything an ablation writes under the output directory.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.json")
    }
    pub fn trajset(&self) -> PathBuf {
        self.root.join("trajset.json")
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{name}.ckpt"))
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.csv")
    }
    pub fn hitrate(&self) -> PathBuf {
        self.root.join("hitrate.svg")
    }
    pub fn overlay(&self) -> PathBuf {
        self.root.join("overlay.svg")
    }
}

/// Run every (arm, seed) pair. All arms see the same split, trajectory set
/// and training settings; arms with the same head differ only in encoder
/// initialization.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let layout = OutputLayout {
        root: cfg.output_dir.clone(),
    };
    let hash = cfg.hash();
    let data = prepare_data(cfg)?;
    save_scenes(&data.instances, layout.dataset())?;
    data.set.save(layout.trajset())?;
    log::info!(
        "{} instances ({} train / {} val / {} test), trajectory set of {}",
        data.instances.len(),
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.set.len()
    );

    let palette = Palette::default();
    let rc = raster_config(cfg);
    let train_inst = data.subset(&data.train);
    let train = prepare_samples(&train_inst, &palette, &rc)?;
    let test = prepare_samples(&data.subset(&data.test), &palette, &rc)?;
    let pretrain_examples: Vec<PretrainExample> = if cfg.arms.iter().any(|a| a.pretrained) {
        train_inst
            .iter()
            .map(|i| PretrainExample::from_instance(i, &palette, &rc))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let mut records = Vec::new();
    let mut overlay_arms = Vec::new();
    for (si, &seed) in cfg.seeds.iter().enumerate() {
        let encoder = if pretrain_examples.is_empty() {
            None
        } else {
            let t = Instant::now();
            let out = pretrain_encoder(
                &pretrain_examples,
                cfg.pretrain.task,
                cfg.training.model.encoder,
                &cfg.pretrain_config(seed),
            )?;
            log::info!(
                "seed {seed}: pretrained on {:?}, accuracy {:.3} in {:.1}s",
                cfg.pretrain.task,
                out.accuracy,
                t.elapsed().as_secs_f64()
            );
            write_bytes(
                &layout.checkpoint(&format!("encoder_seed{seed}")),
                &out.checkpoint,
            )?;
            Some(out.checkpoint)
        };
        for arm in &cfg.arms {
            let t = Instant::now();
            let init = match (&encoder, arm.pretrained) {
                (Some(bytes), true) => EncoderInit::Checkpoint(bytes.clone()),
                _ => EncoderInit::Scratch,
            };
            let ft = FinetuneConfig {
                head: arm.head,
                freeze_lower: cfg.training.freeze_lower,
                model: cfg.training.model.clone(),
                train: cfg.train_config(seed),
                metric: cfg.training.metric,
            };
            let out = finetune(&init, &ft, &train, &test, Some(&data.set))?;
            let wall = t.elapsed().as_secs_f64();
            log::info!(
                "seed {seed} arm {}: minADE_5 {:.3} in {wall:.1}s",
                arm.id,
                out.report.minade5
            );
            write_bytes(
                &layout.checkpoint(&format!("{}_seed{seed}", arm.id)),
                &out.model.store.checkpoint_bytes(""),
            )?;
            if si == 0 {
                let pred = predict_all(&out.model, &test[..1], Some(&data.set))?.remove(0);
                overlay_arms.push(ArmTrajectory::from_prediction(&arm.id, &pred));
            }
            let record = RunRecord {
                config_hash: hash.clone(),
                seed,
                arm: arm.id.clone(),
                report: out.report,
                losses: out.losses,
                wall_time_secs: wall,
            };
            let json = serde_json::to_string_pretty(&record).expect("record serializes");
            write_bytes(
                &layout.runs().join(RunRecord::file_name(&arm.id, seed)),
                json.as_bytes(),
            )?;
            records.push(record);
        }
    }

    write_csv(&report_rows(&records)?, &layout.report())?;
    write_bytes(&layout.hitrate(), hitrate_svg(&records, 2.0, 10).as_bytes())?;
    let first = &data.instances[data.test[0]];
    write_bytes(
        &layout.overlay(),
        overlay_svg(&first.ground_truth, data.set.elements(), &overlay_arms).as_bytes(),
    )?;
    Ok(records)
}
