//! Encoder pretraining on auxiliary raster tasks, and fine-tuning of the
//! trajectory heads with optional freezing of the lower encoder blocks.

use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajkit_autodiff::{read_checkpoint, Adam, GradAccumulator, ParamStore, Tape, Tensor};
use trajkit_core::metrics::{InstanceEval, MetricReport, PredictionSet};
use trajkit_core::raster::{rasterize, Palette, Raster, RasterConfig};
use trajkit_core::scene::{Instance, Trajectory};
use trajkit_core::trajset::{MatchMetric, TrajectorySet};

use crate::error::{Error, Result};
use crate::layers::Dense;
use crate::model::{
    raster_tensor, EncoderConfig, HeadKind, ImageInput, Model, ModelConfig, ModelInput, TinyEncoder,
};

/// Agent counts at or above this share the last class.
pub const AGENT_COUNT_CLASSES: usize = 6;

const HEAD_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
const SHUFFLE_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainTask {
    /// Classify which of four quarter-turn rotations was applied.
    Rotation4,
    /// Classify the number of non-target agents.
    AgentCount,
}

impl PretrainTask {
    pub fn classes(self) -> usize {
        match self {
            PretrainTask::Rotation4 => 4,
            PretrainTask::AgentCount => AGENT_COUNT_CLASSES,
        }
    }
}

impl std::str::FromStr for PretrainTask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotation4" => Ok(PretrainTask::Rotation4),
            "agent_count" => Ok(PretrainTask::AgentCount),
            other => Err(Error::UnknownTask(other.to_string())),
        }
    }
}

/// Learning rate over the epochs of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from `lr` at the first epoch toward 0 after the last.
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                0.5 * base
                    * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs.max(1) as f64).cos())
            }
        }
    }
}

/// Shared optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 1e-3,
            batch_size: 16,
            seed: 0,
            schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "need a positive learning rate and batch size, got {} and {}",
                self.lr, self.batch_size
            )));
        }
        Ok(())
    }
}

/// A raster plus the label inputs for both auxiliary tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub raster: Raster,
    pub other_agents: usize,
}

impl PretrainExample {
    pub fn from_instance(
        instance: &Instance,
        palette: &Palette,
        config: &RasterConfig,
    ) -> Result<Self> {
        Ok(Self {
            raster: rasterize(&instance.scene, palette, config)?,
            other_agents: instance.scene.agents.len().saturating_sub(1),
        })
    }

    fn input(&self, task: PretrainTask, rotation: usize) -> (Tensor, usize) {
        match task {
            PretrainTask::Rotation4 => (raster_tensor(&self.raster.rotated(rotation)), rotation),
            PretrainTask::AgentCount => (
                raster_tensor(&self.raster),
                self.other_agents.min(AGENT_COUNT_CLASSES - 1),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    /// Encoder parameters only, in the binary checkpoint format.
    pub checkpoint: Vec<u8>,
    pub losses: Vec<f64>,
    /// Training-set accuracy after the last epoch (all four rotations for rotation4).
    pub accuracy: f64,
}

/// Train the encoder plus a throwaway linear classifier on an auxiliary task.
pub fn pretrain_encoder(
    examples: &[PretrainExample],
    task: PretrainTask,
    encoder: EncoderConfig,
    train: &TrainConfig,
) -> Result<PretrainOutcome> {
    train.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("no pretraining rasters".into()));
    }
    let mut store = ParamStore::new();
    let enc = TinyEncoder::new(&mut store, encoder, train.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ HEAD_STREAM);
    let head = Dense::new(
        &mut store,
        "pretrain.head",
        encoder.output_dim()?,
        task.classes(),
        &mut rng,
    );
    let mut adam = Adam::new(&store, train.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(train.epochs);
    for epoch in 0..train.epochs {
        adam.lr = train.schedule.lr_at(train.lr, epoch, train.epochs);
        order.shuffle(&mut rng);
        let rotations: Vec<usize> = order
            .iter()
            .map(|_| rand::Rng::random_range(&mut rng, 0..4))
            .collect();
        let mut total = 0.0;
        for (batch, rots) in order
            .chunks(train.batch_size)
            .zip(rotations.chunks(train.batch_size))
        {
            let mut acc = GradAccumulator::new();
            for (&i, &r) in batch.iter().zip(rots) {
                let (image, label) = examples[i].input(task, r);
                let mut tape = Tape::new();
                let x = tape.constant(image);
                let f = enc.encode(&mut tape, &store, x)?;
                let logits = head.forward(&mut tape, &store, f)?;
                let loss = tape.softmax_cross_entropy(logits, label)?;
                total += tape.value(loss).item();
                acc.add(&tape.backward(loss)?);
            }
            adam.step(&mut store, &acc.mean())?;
        }
        let mean = total / examples.len() as f64;
        log::debug!("pretrain {task:?} epoch loss {mean:.5}");
        losses.push(mean);
    }

    let variants: &[usize] = match task {
        PretrainTask::Rotation4 => &[0, 1, 2, 3],
        PretrainTask::AgentCount => &[0],
    };
    let mut correct = 0usize;
    for ex in examples {
        for &r in variants {
            let (image, label) = ex.input(task, r);
            let mut tape = Tape::new();
            let x = tape.constant(image);
            let f = enc.encode(&mut tape, &store, x)?;
            let logits = head.forward(&mut tape, &store, f)?;
            if argmax(tape.value(logits).data()) == label {
                correct += 1;
            }
        }
    }
    let accuracy = correct as f64 / (examples.len() * variants.len()) as f64;
    Ok(PretrainOutcome {
        checkpoint: store.checkpoint_bytes(crate::model::ENCODER_PREFIX),
        losses,
        accuracy,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// One supervised instance prepared for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: ModelInput,
    pub gt: Trajectory,
}

pub fn prepare_samples(
    instances: &[Instance],
    palette: &Palette,
    config: &RasterConfig,
) -> Result<Vec<Sample>> {
    instances
        .iter()
        .map(|inst| {
            let raster = rasterize(&inst.scene, palette, config)?;
            Ok(Sample {
                input: ModelInput::new(&raster, &inst.target_state().state_vector()),
                gt: inst.ground_truth.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderInit {
    Scratch,
    Checkpoint(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub head: HeadKind,
    pub freeze_lower: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub metric: MatchMetric,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            head: HeadKind::CoverNet,
            freeze_lower: false,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            metric: MatchMetric::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: Model,
    pub losses: Vec<f64>,
    pub report: MetricReport,
}

/// Build a model from `init`, train it on `train`, and evaluate on `eval`.
///
/// With `freeze_lower`, blocks 0–2 are frozen and their outputs are computed
/// once per training sample.
pub fn finetune(
    init: &EncoderInit,
    config: &FinetuneConfig,
    train: &[Sample],
    eval: &[Sample],
    set: Option<&TrajectorySet>,
) -> Result<FinetuneOutcome> {
    config.train.validate()?;
    let set_size = match (config.head, set) {
        (HeadKind::CoverNet, Some(s)) => s.len(),
        (HeadKind::CoverNet, None) => {
            return Err(Error::Config("CoverNet needs a trajectory set".into()))
        }
        (HeadKind::Mtp, _) => 0,
    };
    let mut model = Model::new(
        config.model.clone(),
        config.head,
        set_size,
        config.train.seed,
    )?;
    if let EncoderInit::Checkpoint(bytes) = init {
        load_encoder(&mut model, bytes)?;
    }
    if config.freeze_lower {
        model.encoder.set_lower_frozen(&mut model.store, true);
    }
    model.fit_state_standardization(&train.iter().map(|s| s.input.state).collect::<Vec<_>>());
    let losses = train_model(&mut model, train, set, config.metric, &config.train)?;
    let report = evaluate(&model, eval, set)?;
    Ok(FinetuneOutcome {
        model,
        losses,
        report,
    })
}

/// Overwrite the encoder from checkpoint bytes; every encoder parameter must be present.
pub fn load_encoder(model: &mut Model, bytes: &[u8]) -> Result<()> {
    let entries = read_checkpoint(&mut &bytes[..])?;
    let expected = model
        .store
        .iter()
        .filter(|(_, p)| p.name.starts_with(crate::model::ENCODER_PREFIX))
        .count();
    if entries.len() != expected
        || entries
            .iter()
            .any(|(n, _)| !n.starts_with(crate::model::ENCODER_PREFIX))
    {
        return Err(Error::Shape(format!(
            "checkpoint holds {} entries, encoder has {expected} parameters",
            entries.len()
        )));
    }
    model.store.load_entries(&entries)?;
    Ok(())
}

/// Inputs with the lower-block output precomputed when those blocks are frozen.
fn training_inputs(model: &Model, samples: &[Sample]) -> Result<Vec<ModelInput>> {
    let lower_frozen = model
        .encoder
        .lower_param_names(&model.store)
        .iter()
        .all(|n| {
            model
                .store
                .find(n)
                .is_some_and(|id| !model.store.get(id).trainable)
        });
    if !lower_frozen {
        return Ok(samples.iter().map(|s| s.input.clone()).collect());
    }
    samples
        .iter()
        .map(|s| match &s.input.image {
            ImageInput::Raster(t) => Ok(ModelInput {
                image: ImageInput::Lower(model.lower_features(t)?),
                state: s.input.state,
            }),
            ImageInput::Lower(_) => Ok(s.input.clone()),
        })
        .collect()
}

/// Minibatch Adam over `samples`; returns the mean loss per epoch.
pub fn train_model(
    model: &mut Model,
    samples: &[Sample],
    set: Option<&TrajectorySet>,
    metric: MatchMetric,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let inputs = training_inputs(model, samples)?;
    let mut losses = Vec::with_capacity(config.epochs);
    let mut adam = Adam::new(&model.store, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..config.epochs {
        adam.lr = config.schedule.lr_at(config.lr, epoch, config.epochs);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut acc = GradAccumulator::new();
            for &i in batch {
                let mut tape = Tape::new();
                let loss = model.loss(
                    &mut tape,
                    &model.store,
                    &inputs[i],
                    &samples[i].gt,
                    set,
                    metric,
                )?;
                total += tape.value(loss).item();
                acc.add(&tape.backward(loss)?);
            }
            adam.step(&mut model.store, &acc.mean())?;
        }
        let mean = total / samples.len() as f64;
        log::debug!("{:?} epoch {epoch} loss {mean:.5}", model.kind);
        losses.push(mean);
    }
    Ok(losses)
}

/// Predictions for every sample, computed concurrently across instances.
pub fn predict_all(
    model: &Model,
    samples: &[Sample],
    set: Option<&TrajectorySet>,
) -> Result<Vec<PredictionSet>> {
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(samples.len().max(1));
    if workers <= 1 {
        return samples
            .iter()
            .map(|s| model.predict(&s.input, set))
            .collect();
    }
    let chunk = samples.len().div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| model.predict(&s.input, set))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for h in handles {
            out.extend(h.join().expect("prediction worker panicked")?);
        }
        Ok(out)
    })
}

pub fn evaluate(
    model: &Model,
    samples: &[Sample],
    set: Option<&TrajectorySet>,
) -> Result<MetricReport> {
    let preds = predict_all(model, samples, set)?;
    let evals = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| InstanceEval::new(p, &s.gt))
        .collect::<trajkit_core::Result<Vec<_>>>()?;
    Ok(MetricReport::from_evals(evals)?)
}
