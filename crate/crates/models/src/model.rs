//! Raster encoder plus the two mid-level heads.
//!
//! CoverNet scores every element of a fixed trajectory set; MTP regresses a
//! small number of modes and a logit per mode. Both fuse the encoder feature
//! vector with the standardized target state through one hidden layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use trajkit_autodiff::{softmax, ParamId, ParamStore, Tape, Tensor, Var};
use trajkit_core::metrics::{ade, PredictionSet};
use trajkit_core::raster::Raster;
use trajkit_core::scene::{StateVector, Trajectory, DT, HORIZON};
use trajkit_core::trajset::{MatchMetric, TrajectorySet};

use crate::error::{Error, Result};
use crate::layers::{ConvBlock, Dense};

/// Encoder depth; the lowest three quarters can be frozen together.
pub const ENCODER_BLOCKS: usize = 4;
pub const LOWER_BLOCKS: usize = 3;

pub const ENCODER_PREFIX: &str = "encoder.";

/// Coordinates per trajectory (12 points × 2).
pub const TRAJ_COORDS: usize = HORIZON * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_size: usize,
    pub channels: [usize; ENCODER_BLOCKS],
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            channels: [6, 8, 12, 16],
        }
    }
}

impl EncoderConfig {
    /// Spatial side length after `blocks` conv+pool blocks.
    pub fn side_after(&self, blocks: usize) -> Option<usize> {
        let mut s = self.input_size;
        for _ in 0..blocks {
            s = s.checked_sub(2)? / 2;
            if s == 0 {
                return None;
            }
        }
        Some(s)
    }

    pub fn output_dim(&self) -> Result<usize> {
        let side = self.side_after(ENCODER_BLOCKS).ok_or_else(|| {
            Error::Config(format!(
                "input size {} too small for the encoder",
                self.input_size
            ))
        })?;
        Ok(self.channels[ENCODER_BLOCKS - 1] * side * side)
    }

    pub fn lower_shape(&self) -> Option<[usize; 3]> {
        let s = self.side_after(LOWER_BLOCKS)?;
        Some([self.channels[LOWER_BLOCKS - 1], s, s])
    }
}

/// Four conv blocks then flatten.
#[derive(Debug, Clone)]
pub struct TinyEncoder {
    pub config: EncoderConfig,
    pub blocks: Vec<ConvBlock>,
}

impl TinyEncoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, seed: u64) -> Result<Self> {
        config.output_dim()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let blocks = config
            .channels
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let b = ConvBlock::new(
                    store,
                    &format!("{ENCODER_PREFIX}block{i}"),
                    cin,
                    cout,
                    &mut rng,
                );
                cin = cout;
                b
            })
            .collect();
        Ok(Self { config, blocks })
    }

    /// Blocks 0–2.
    pub fn lower(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        image: Var,
    ) -> trajkit_autodiff::Result<Var> {
        let mut x = image;
        for b in &self.blocks[..LOWER_BLOCKS] {
            x = b.forward(tape, store, x)?;
        }
        Ok(x)
    }

    /// Block 3 and flatten, from the output of [`TinyEncoder::lower`].
    pub fn upper(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        lower: Var,
    ) -> trajkit_autodiff::Result<Var> {
        let mut x = lower;
        for b in &self.blocks[LOWER_BLOCKS..] {
            x = b.forward(tape, store, x)?;
        }
        tape.flatten(x)
    }

    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        image: Var,
    ) -> trajkit_autodiff::Result<Var> {
        let l = self.lower(tape, store, image)?;
        self.upper(tape, store, l)
    }

    /// Freeze (or release) blocks 0–2.
    pub fn set_lower_frozen(&self, store: &mut ParamStore, frozen: bool) {
        for b in &self.blocks[..LOWER_BLOCKS] {
            store.set_trainable(b.kernel, !frozen);
            store.set_trainable(b.bias, !frozen);
        }
    }

    /// Names of the parameters in blocks 0–2.
    pub fn lower_param_names(&self, store: &ParamStore) -> Vec<String> {
        self.blocks[..LOWER_BLOCKS]
            .iter()
            .flat_map(|b| [b.kernel, b.bias])
            .map(|id| store.get(id).name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    #[serde(rename = "covernet")]
    CoverNet,
    Mtp,
}

impl HeadKind {
    pub fn prefix(self) -> &'static str {
        match self {
            HeadKind::CoverNet => "covernet",
            HeadKind::Mtp => "mtp",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covernet" => Ok(HeadKind::CoverNet),
            "mtp" => Ok(HeadKind::Mtp),
            other => Err(Error::Config(format!("unknown head {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub hidden: usize,
    /// MTP mode count.
    pub modes: usize,
    /// MTP regression outputs are multiplied by this many meters.
    pub traj_scale: f64,
    /// Start the final layer at zero (uniform CoverNet probabilities).
    pub zero_init_output: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            hidden: 64,
            modes: 3,
            traj_scale: 10.0,
            zero_init_output: false,
        }
    }
}

/// Encoder input: a full raster, or cached output of the frozen lower blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageInput {
    Raster(Tensor),
    Lower(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub image: ImageInput,
    pub state: [f64; 3],
}

impl ModelInput {
    pub fn new(raster: &Raster, state: &StateVector) -> Self {
        Self {
            image: ImageInput::Raster(raster_tensor(raster)),
            state: state.normalized(),
        }
    }
}

/// `[3, H, W]` tensor from a raster.
pub fn raster_tensor(raster: &Raster) -> Tensor {
    Tensor::new(vec![3, raster.height(), raster.width()], raster.to_chw()).expect("raster dims")
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub kind: HeadKind,
    pub store: ParamStore,
    pub encoder: TinyEncoder,
    hidden: Dense,
    output: Dense,
    state_shift: ParamId,
    state_scale: ParamId,
    /// Number of CoverNet classes; zero for MTP.
    set_size: usize,
}

impl Model {
    /// `set_size` is the trajectory-set size for CoverNet and ignored for MTP.
    pub fn new(config: ModelConfig, kind: HeadKind, set_size: usize, seed: u64) -> Result<Self> {
        if kind == HeadKind::CoverNet && set_size == 0 {
            return Err(Error::Config(
                "CoverNet needs a nonempty trajectory set".into(),
            ));
        }
        if kind == HeadKind::Mtp && config.modes == 0 {
            return Err(Error::Config("MTP needs at least one mode".into()));
        }
        let mut store = ParamStore::new();
        let encoder = TinyEncoder::new(&mut store, config.encoder, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let prefix = kind.prefix();
        let fused = config.encoder.output_dim()? + 3;
        let hidden = Dense::new(
            &mut store,
            &format!("{prefix}.hidden"),
            fused,
            config.hidden,
            &mut rng,
        );
        let outputs = match kind {
            HeadKind::CoverNet => set_size,
            HeadKind::Mtp => config.modes * (TRAJ_COORDS + 1),
        };
        let output = if config.zero_init_output {
            Dense::zeroed(
                &mut store,
                &format!("{prefix}.output"),
                config.hidden,
                outputs,
            )
        } else {
            Dense::new(
                &mut store,
                &format!("{prefix}.output"),
                config.hidden,
                outputs,
                &mut rng,
            )
        };
        let state_shift = store.add(format!("{prefix}.state_shift"), Tensor::zeros(&[1, 3]));
        let state_scale = store.add(format!("{prefix}.state_scale"), Tensor::full(&[1, 3], 1.0));
        store.set_trainable(state_shift, false);
        store.set_trainable(state_scale, false);
        let set_size = if kind == HeadKind::CoverNet {
            set_size
        } else {
            0
        };
        Ok(Self {
            config,
            kind,
            store,
            encoder,
            hidden,
            output,
            state_shift,
            state_scale,
            set_size,
        })
    }

    /// Standardize the state input to zero mean and unit variance over
    /// the given normalized states. The statistics are stored as frozen parameters, so they
    /// travel with checkpoints.
    pub fn fit_state_standardization(&mut self, states: &[[f64; 3]]) {
        if states.is_empty() {
            return;
        }
        let n = states.len() as f64;
        let mut mean = [0.0; 3];
        for st in states {
            for (m, v) in mean.iter_mut().zip(st) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 3];
        for st in states {
            for ((s, v), m) in var.iter_mut().zip(st).zip(mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|v| if v.sqrt() > 1e-9 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        self.store.get_mut(self.state_shift).value = Tensor::row(mean.to_vec());
        self.store.get_mut(self.state_scale).value = Tensor::row(scale);
    }

    pub fn set_size(&self) -> usize {
        self.set_size
    }

    pub fn modes(&self) -> usize {
        self.config.modes
    }

    fn check_image(&self, image: &ImageInput) -> Result<()> {
        let (have, want) = match image {
            ImageInput::Raster(t) => {
                let s = self.config.encoder.input_size;
                (t.shape().to_vec(), vec![3, s, s])
            }
            ImageInput::Lower(t) => (
                t.shape().to_vec(),
                self.config
                    .encoder
                    .lower_shape()
                    .map(|s| s.to_vec())
                    .unwrap_or_default(),
            ),
        };
        if have != want {
            return Err(Error::Shape(format!(
                "encoder expects input {want:?}, got {have:?}"
            )));
        }
        Ok(())
    }

    /// Output of the frozen lower blocks for caching.
    pub fn lower_features(&self, raster: &Tensor) -> Result<Tensor> {
        self.check_image(&ImageInput::Raster(raster.clone()))?;
        let mut tape = Tape::new();
        let x = tape.constant(raster.clone());
        let l = self.encoder.lower(&mut tape, &self.store, x)?;
        Ok(tape.value(l).clone())
    }

    /// Raw head output `[1, n]` built on `tape`.
    pub fn head_output(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &ModelInput,
    ) -> Result<Var> {
        self.check_image(&input.image)?;
        let features = match &input.image {
            ImageInput::Raster(t) => {
                let x = tape.constant(t.clone());
                self.encoder.encode(tape, store, x)?
            }
            ImageInput::Lower(t) => {
                let x = tape.constant(t.clone());
                self.encoder.upper(tape, store, x)?
            }
        };
        let state = tape.constant(Tensor::row(input.state.to_vec()));
        let shift = tape.param(store, self.state_shift);
        let scale = tape.param(store, self.state_scale);
        let centered = tape.sub(state, shift)?;
        let state = tape.mul(centered, scale)?;
        let fused = tape.concat(&[features, state])?;
        let h = self.hidden.forward(tape, store, fused)?;
        let h = tape.relu(h)?;
        Ok(self.output.forward(tape, store, h)?)
    }

    /// Split an MTP head output into scaled mode coordinates and logits.
    pub fn mtp_split(&self, tape: &mut Tape, output: Var) -> Result<(Var, Var)> {
        let m = self.config.modes;
        let raw = tape.slice(output, 0, m * TRAJ_COORDS)?;
        let modes = tape.scale(raw, self.config.traj_scale)?;
        let logits = tape.slice(output, m * TRAJ_COORDS, m)?;
        Ok((modes, logits))
    }

    /// Training loss for one instance.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &ModelInput,
        gt: &Trajectory,
        set: Option<&TrajectorySet>,
        metric: MatchMetric,
    ) -> Result<Var> {
        let out = self.head_output(tape, store, input)?;
        match self.kind {
            HeadKind::CoverNet => {
                let set = set.ok_or_else(|| {
                    Error::Config("CoverNet loss needs the trajectory set".into())
                })?;
                covernet_loss(tape, out, gt, set, metric)
            }
            HeadKind::Mtp => {
                let (modes, logits) = self.mtp_split(tape, out)?;
                mtp_loss(tape, modes, logits, gt)
            }
        }
    }

    pub fn predict(
        &self,
        input: &ModelInput,
        set: Option<&TrajectorySet>,
    ) -> Result<PredictionSet> {
        let mut tape = Tape::new();
        let out = self.head_output(&mut tape, &self.store, input)?;
        match self.kind {
            HeadKind::CoverNet => {
                let set = set.ok_or_else(|| {
                    Error::Config("CoverNet prediction needs the trajectory set".into())
                })?;
                if set.len() != self.set_size {
                    return Err(Error::Shape(format!(
                        "head scores {} trajectories but the set has {}",
                        self.set_size,
                        set.len()
                    )));
                }
                let probs = softmax(tape.value(out).data());
                Ok(PredictionSet::new(set.elements().to_vec(), probs)?)
            }
            HeadKind::Mtp => {
                let (modes, logits) = self.mtp_split(&mut tape, out)?;
                let probs = softmax(tape.value(logits).data());
                let trajs = tape
                    .value(modes)
                    .data()
                    .chunks(TRAJ_COORDS)
                    .map(|c| Trajectory::from_flat(c, DT))
                    .collect::<trajkit_core::Result<Vec<_>>>()?;
                Ok(PredictionSet::new(trajs, probs)?)
            }
        }
    }

    /// Replace every parameter from a full checkpoint of an identically shaped model.
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<()> {
        let entries = trajkit_autodiff::read_checkpoint(&mut &bytes[..])?;
        if entries.len() != self.store.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} parameters, model has {}",
                entries.len(),
                self.store.len()
            )));
        }
        self.store.load_entries(&entries)?;
        Ok(())
    }

    /// Encoder parameters as a checkpoint.
    pub fn encoder_checkpoint(&self) -> Vec<u8> {
        self.store.checkpoint_bytes(ENCODER_PREFIX)
    }
}

/// CoverNet forward pass: softmax over the set, paired with its elements in order.
pub fn covernet_forward(
    model: &Model,
    raster: &Raster,
    state: &StateVector,
    set: &TrajectorySet,
) -> Result<PredictionSet> {
    if model.kind != HeadKind::CoverNet {
        return Err(Error::Config("not a CoverNet model".into()));
    }
    model.predict(&ModelInput::new(raster, state), Some(set))
}

pub fn mtp_forward(model: &Model, raster: &Raster, state: &StateVector) -> Result<PredictionSet> {
    if model.kind != HeadKind::Mtp {
        return Err(Error::Config("not an MTP model".into()));
    }
    model.predict(&ModelInput::new(raster, state), None)
}

/// Cross-entropy with the set element closest to the ground truth as target.
pub fn covernet_loss(
    tape: &mut Tape,
    logits: Var,
    gt: &Trajectory,
    set: &TrajectorySet,
    metric: MatchMetric,
) -> Result<Var> {
    let k = tape.value(logits).numel();
    if k != set.len() {
        return Err(Error::Shape(format!(
            "{k} logits for a set of {}",
            set.len()
        )));
    }
    let target = set.closest_element(gt, metric)?;
    Ok(tape.softmax_cross_entropy(logits, target)?)
}

/// Index of the mode with least ADE to `gt`; lower index on ties.
pub fn best_mode(modes: &[f64], gt: &Trajectory) -> Result<usize> {
    let mut best = (f64::INFINITY, 0);
    for (i, chunk) in modes.chunks(TRAJ_COORDS).enumerate() {
        let d = ade(&Trajectory::from_flat(chunk, DT)?, gt)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// L = L_C + L_R: cross-entropy toward the best-matching mode plus the mean
/// squared error of that mode's 24 coordinates.
pub fn mtp_loss(tape: &mut Tape, modes: Var, logits: Var, gt: &Trajectory) -> Result<Var> {
    let m = tape.value(logits).numel();
    if tape.value(modes).numel() != m * TRAJ_COORDS || gt.len() != HORIZON {
        return Err(Error::Shape(format!(
            "{} mode coordinates for {m} logits and a {}-point ground truth",
            tape.value(modes).numel(),
            gt.len()
        )));
    }
    let best = best_mode(tape.value(modes).data(), gt)?;
    let classification = tape.softmax_cross_entropy(logits, best)?;
    let chosen = tape.slice(modes, best * TRAJ_COORDS, TRAJ_COORDS)?;
    let target = tape.constant(Tensor::row(gt.to_flat()));
    let regression = tape.mse_loss(chosen, target)?;
    Ok(tape.add(classification, regression)?)
}
