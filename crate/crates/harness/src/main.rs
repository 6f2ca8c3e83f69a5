use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use trajkit::ablation::RASTER_RESOLUTION;
use trajkit::config::split_indices;
use trajkit::report::{baseline_rows, load_records, report_rows, write_csv};
use trajkit::{hitrate_svg, overlay_svg, run_ablation, ArmTrajectory, ExperimentConfig};
use trajkit_core::io::{load_scenes, save_scenes};
use trajkit_core::raster::{raster_to_png, rasterize, Palette, RasterConfig};
use trajkit_core::synth::{generate_synthetic, SynthConfig};
use trajkit_core::trajset::{build_cover, TrajectorySet};
use trajkit_core::Instance;
use trajkit_models::{
    evaluate, evaluate_seq, finetune, generate_seq, predict_all, prepare_samples, pretrain_encoder,
    train_seq, EncoderConfig, EncoderInit, FinetuneConfig, HeadKind, Model, ModelConfig,
    PretrainExample, PretrainTask, SeqConfig, SeqRegressor, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "trajkit",
    version,
    about = "Trajectory prediction toolkit: data, models, ablations, reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Head {
    Covernet,
    Mtp,
    /// Two-timestep recurrent regressor on synthetic feature vectors.
    Seq,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Rotation4,
    AgentCount,
}

impl From<Task> for PretrainTask {
    fn from(t: Task) -> Self {
        match t {
            Task::Rotation4 => PretrainTask::Rotation4,
            Task::AgentCount => PretrainTask::AgentCount,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset.
    Gen {
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator settings as JSON; `--count` overrides its count.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one instance's BEV raster to PNG.
    Rasterize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = RASTER_RESOLUTION)]
        resolution: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an ε-cover trajectory set from a dataset's ground truths.
    Trajset {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the raster encoder on an auxiliary task.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "rotation4")]
        task: Task,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation from a config, or train one model.
    Train {
        /// Experiment config; runs every arm for every seed.
        #[arg(long, conflicts_with_all = ["data", "trajset", "init", "freeze", "out"])]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        trajset: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "covernet")]
        head: Head,
        /// Encoder checkpoint to start from.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Freeze encoder blocks 0–2.
        #[arg(long)]
        freeze: bool,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Synthetic instances for `--head seq`.
        #[arg(long, default_value_t = 1000)]
        count: usize,
        /// Model checkpoint to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluation report JSON to write.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a trained model on a dataset's test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "covernet")]
        head: Head,
        #[arg(long)]
        trajset: Option<PathBuf>,
        /// Evaluate every instance instead of the test split.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constant-velocity and physics-oracle baselines as CSV.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-seed and median table from a directory of run records.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// SVG plots.
    Plot {
        #[command(subcommand)]
        kind: PlotKind,
    },
}

#[derive(Subcommand)]
enum PlotKind {
    /// HitRate versus k, one curve per arm.
    Hitrate {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        distance: f64,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground truth, trajectory set and each model's most likely trajectory for one instance.
    Overlay {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        trajset: Option<PathBuf>,
        /// NAME=HEAD:CHECKPOINT, repeatable.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path) -> Result<Vec<Instance>> {
    let loaded = load_scenes(path).with_context(|| format!("loading {}", path.display()))?;
    if loaded.clamp_warnings > 0 {
        log::warn!(
            "{}: clamped {} out-of-range kinematic values",
            path.display(),
            loaded.clamp_warnings
        );
    }
    Ok(loaded.instances)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn model_head(head: Head) -> Result<HeadKind> {
    match head {
        Head::Covernet => Ok(HeadKind::CoverNet),
        Head::Mtp => Ok(HeadKind::Mtp),
        Head::Seq => bail!("the sequence regressor does not run on scene data"),
    }
}

fn load_set(path: Option<&Path>, head: HeadKind) -> Result<Option<TrajectorySet>> {
    match (path, head) {
        (Some(p), _) => Ok(Some(
            TrajectorySet::load(p).with_context(|| format!("loading {}", p.display()))?,
        )),
        (None, HeadKind::CoverNet) => bail!("--trajset is required for the covernet head"),
        (None, HeadKind::Mtp) => Ok(None),
    }
}

fn load_model(path: &Path, head: HeadKind, set: Option<&TrajectorySet>) -> Result<Model> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut model = Model::new(ModelConfig::default(), head, set.map_or(0, |s| s.len()), 0)?;
    model
        .load_checkpoint(&bytes)
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(model)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            count,
            seed,
            config,
            out,
        } => {
            let mut cfg: SynthConfig = match config {
                Some(p) => serde_json::from_str(
                    &fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => SynthConfig::default(),
            };
            cfg.count = count;
            let data = generate_synthetic(&cfg, seed)?;
            save_scenes(&data, &out)?;
            log::info!("wrote {} instances to {}", data.len(), out.display());
        }
        Command::Rasterize {
            data,
            index,
            size,
            resolution,
            out,
        } => {
            let instances = load(&data)?;
            let inst = instances.get(index).with_context(|| {
                format!(
                    "index {index} out of range for {} instances",
                    instances.len()
                )
            })?;
            let raster = rasterize(
                &inst.scene,
                &Palette::default(),
                &RasterConfig::square(size, resolution),
            )?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            raster_to_png(&raster, &out)?;
        }
        Command::Trajset { data, epsilon, out } => {
            let gts: Vec<_> = load(&data)?.into_iter().map(|i| i.ground_truth).collect();
            let set = build_cover(&gts, epsilon)?;
            set.save(&out)?;
            log::info!(
                "{} trajectories cover {} at ε = {epsilon} m",
                set.len(),
                gts.len()
            );
        }
        Command::Pretrain {
            data,
            task,
            epochs,
            lr,
            batch_size,
            seed,
            out,
        } => {
            let instances = load(&data)?;
            let rc = RasterConfig::square(EncoderConfig::default().input_size, RASTER_RESOLUTION);
            let examples = instances
                .iter()
                .map(|i| PretrainExample::from_instance(i, &Palette::default(), &rc))
                .collect::<Result<Vec<_>, _>>()?;
            let result = pretrain_encoder(
                &examples,
                task.into(),
                EncoderConfig::default(),
                &TrainConfig {
                    epochs,
                    lr,
                    batch_size,
                    seed,
                    ..TrainConfig::default()
                },
            )?;
            write(&out, &result.checkpoint)?;
            log::info!("training accuracy {:.4}", result.accuracy);
        }
        Command::Train {
            config: Some(path), ..
        } => {
            let cfg = ExperimentConfig::load(&path)?;
            let records = run_ablation(&cfg)?;
            log::info!(
                "{} runs written under {}",
                records.len(),
                cfg.output_dir.display()
            );
        }
        Command::Train {
            head: Head::Seq,
            epochs,
            lr,
            batch_size,
            seed,
            count,
            out,
            report,
            ..
        } => {
            let cfg = SeqConfig::default();
            let samples = generate_seq(count, &cfg, seed);
            let (train, test) = samples.split_at(count * 4 / 5);
            if train.is_empty() || test.is_empty() {
                bail!("--count {count} leaves no training or evaluation samples");
            }
            let mut model = SeqRegressor::new(cfg, seed)?;
            train_seq(&mut model, train, epochs, lr, batch_size, seed)?;
            let r = evaluate_seq(&model, test)?;
            log::info!(
                "speed MSE {:.4} (m/s)², angle MSE {:.4} deg²",
                r.mse_speed,
                r.mse_angle
            );
            if let Some(p) = out {
                write(&p, model.store.checkpoint_bytes(""))?;
            }
            if let Some(p) = report {
                write(&p, serde_json::to_string_pretty(&r)?)?;
            }
        }
        Command::Train {
            data,
            trajset,
            head,
            init,
            freeze,
            epochs,
            lr,
            batch_size,
            seed,
            out,
            report,
            ..
        } => {
            let data = data.context("--data or --config is required")?;
            let head = model_head(head)?;
            let instances = load(&data)?;
            let set = load_set(trajset.as_deref(), head)?;
            let [train_idx, _, test_idx] = split_indices(instances.len());
            let pick = |idx: &[usize]| {
                idx.iter()
                    .map(|&i| instances[i].clone())
                    .collect::<Vec<_>>()
            };
            let rc = RasterConfig::square(EncoderConfig::default().input_size, RASTER_RESOLUTION);
            let train = prepare_samples(&pick(&train_idx), &Palette::default(), &rc)?;
            let test = prepare_samples(&pick(&test_idx), &Palette::default(), &rc)?;
            if train.is_empty() || test.is_empty() {
                bail!(
                    "{} instances leave an empty train or test split",
                    instances.len()
                );
            }
            let init = match init {
                Some(p) => EncoderInit::Checkpoint(
                    fs::read(&p).with_context(|| format!("reading {}", p.display()))?,
                ),
                None => EncoderInit::Scratch,
            };
            let cfg = FinetuneConfig {
                head,
                freeze_lower: freeze,
                train: TrainConfig {
                    epochs,
                    lr,
                    batch_size,
                    seed,
                    ..TrainConfig::default()
                },
                ..FinetuneConfig::default()
            };
            let result = finetune(&init, &cfg, &train, &test, set.as_ref())?;
            log::info!("test minADE_5 {:.4}", result.report.minade5);
            if let Some(p) = out {
                write(&p, result.model.store.checkpoint_bytes(""))?;
            }
            if let Some(p) = report {
                write(&p, serde_json::to_string_pretty(&result.report)?)?;
            }
        }
        Command::Eval {
            data,
            model,
            head,
            trajset,
            all,
            out,
        } => {
            let head = model_head(head)?;
            let instances = load(&data)?;
            let set = load_set(trajset.as_deref(), head)?;
            let model = load_model(&model, head, set.as_ref())?;
            let chosen: Vec<Instance> = if all {
                instances
            } else {
                split_indices(instances.len())[2]
                    .iter()
                    .map(|&i| instances[i].clone())
                    .collect()
            };
            let rc = RasterConfig::square(model.config.encoder.input_size, RASTER_RESOLUTION);
            let samples = prepare_samples(&chosen, &Palette::default(), &rc)?;
            let report = evaluate(&model, &samples, set.as_ref())?;
            write(&out, serde_json::to_string_pretty(&report)?)?;
        }
        Command::Baseline { data, out } => {
            let rows = baseline_rows(&load(&data)?)?;
            write_csv(&rows, &out)?;
        }
        Command::Report { runs, out } => {
            let records = load_records(&runs)?;
            if records.is_empty() {
                bail!("no run records in {}", runs.display());
            }
            write_csv(&report_rows(&records)?, &out)?;
        }
        Command::Plot {
            kind:
                PlotKind::Hitrate {
                    runs,
                    distance,
                    k_max,
                    out,
                },
        } => {
            let records = load_records(&runs)?;
            write(&out, hitrate_svg(&records, distance, k_max))?;
        }
        Command::Plot {
            kind:
                PlotKind::Overlay {
                    data,
                    index,
                    trajset,
                    models,
                    out,
                },
        } => {
            let instances = load(&data)?;
            let inst = instances.get(index).with_context(|| {
                format!(
                    "index {index} out of range for {} instances",
                    instances.len()
                )
            })?;
            let set = match &trajset {
                Some(p) => Some(
                    TrajectorySet::load(p).with_context(|| format!("loading {}", p.display()))?,
                ),
                None => None,
            };
            let mut arms = Vec::new();
            for spec in &models {
                let (name, rest) = spec
                    .split_once('=')
                    .context("--model expects NAME=HEAD:CHECKPOINT")?;
                let (head, path) = rest
                    .split_once(':')
                    .context("--model expects NAME=HEAD:CHECKPOINT")?;
                let head: HeadKind = head.parse()?;
                let model = load_model(Path::new(path), head, set.as_ref())?;
                let rc = RasterConfig::square(model.config.encoder.input_size, RASTER_RESOLUTION);
                let sample = prepare_samples(std::slice::from_ref(inst), &Palette::default(), &rc)?;
                let pred = predict_all(&model, &sample, set.as_ref())?.remove(0);
                arms.push(ArmTrajectory::from_prediction(name, &pred));
            }
            let background = set.as_ref().map_or(&[][..], |s| s.elements());
            write(&out, overlay_svg(&inst.ground_truth, background, &arms))?;
        }
    }
    Ok(())
}
