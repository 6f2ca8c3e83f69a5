//! Low-level path: two timesteps of camera features and map vectors, a gated
//! recurrent cell, and separate speed and steering-angle regressors.
//!
//! The inputs are synthetic feature vectors. [`generate_seq`] draws a hidden
//! driving state per instance and projects it through fixed random matrices,
//! so the features carry enough signal to learn from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use trajkit_autodiff::{glorot_uniform, Adam, GradAccumulator, ParamStore, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::layers::Dense;

/// Seconds between the two observed timesteps.
pub const STEP_SECONDS: f64 = 0.4;

const SENSOR_SEED: u64 = 0x5eed_cafe;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqConfig {
    pub feature_dim: usize,
    pub map_dim: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Outputs are `speed_scale * raw` m/s and `angle_scale * raw` degrees.
    pub speed_scale: f64,
    pub angle_scale: f64,
    pub zero_init_output: bool,
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            map_dim: 8,
            embed: 16,
            hidden: 16,
            speed_scale: 10.0,
            angle_scale: 30.0,
            zero_init_output: true,
        }
    }
}

/// One instance: observations at t − 0.4 s and t, targets at t + 0.4 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqSample {
    pub features: [Vec<f64>; 2],
    pub map: [Vec<f64>; 2],
    pub speed: f64,
    pub angle: f64,
}

/// Gated recurrent unit over `[1, n]` rows.
#[derive(Debug, Clone, Copy)]
struct GruCell {
    update: Dense,
    reset: Dense,
    candidate: Dense,
}

impl GruCell {
    fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let n = inputs + hidden;
        Self {
            update: Dense::new(store, &format!("{name}.update"), n, hidden, rng),
            reset: Dense::new(store, &format!("{name}.reset"), n, hidden, rng),
            candidate: Dense::new(store, &format!("{name}.candidate"), n, hidden, rng),
        }
    }

    /// h' = (1 − z)·n + z·h
    fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        h: Var,
    ) -> trajkit_autodiff::Result<Var> {
        let xh = tape.concat(&[x, h])?;
        let z = self.update.forward(tape, store, xh)?;
        let z = tape.sigmoid(z)?;
        let r = self.reset.forward(tape, store, xh)?;
        let r = tape.sigmoid(r)?;
        let rh = tape.mul(r, h)?;
        let xrh = tape.concat(&[x, rh])?;
        let n = self.candidate.forward(tape, store, xrh)?;
        let n = tape.tanh(n)?;
        let zn = tape.mul(z, n)?;
        let keep = tape.sub(n, zn)?;
        let zh = tape.mul(z, h)?;
        tape.add(keep, zh)
    }
}

#[derive(Debug, Clone)]
pub struct SeqRegressor {
    pub config: SeqConfig,
    pub store: ParamStore,
    camera: Dense,
    map: Dense,
    fusion: Dense,
    cell: GruCell,
    speed: Dense,
    angle: Dense,
}

impl SeqRegressor {
    pub fn new(config: SeqConfig, seed: u64) -> Result<Self> {
        if config.feature_dim == 0 || config.map_dim == 0 || config.embed == 0 || config.hidden == 0
        {
            return Err(Error::Config(
                "sequence regressor widths must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let camera = Dense::new(
            &mut store,
            "seq.camera",
            config.feature_dim,
            config.embed,
            &mut rng,
        );
        let map = Dense::new(
            &mut store,
            "seq.map",
            config.map_dim,
            config.embed,
            &mut rng,
        );
        let fusion = Dense::new(
            &mut store,
            "seq.fusion",
            2 * config.embed,
            config.hidden,
            &mut rng,
        );
        let cell = GruCell::new(
            &mut store,
            "seq.gru",
            config.hidden,
            config.hidden,
            &mut rng,
        );
        let (speed, angle) = if config.zero_init_output {
            (
                Dense::zeroed(&mut store, "seq.speed", 2 * config.hidden, 1),
                Dense::zeroed(&mut store, "seq.angle", 2 * config.hidden, 1),
            )
        } else {
            (
                Dense::new(&mut store, "seq.speed", 2 * config.hidden, 1, &mut rng),
                Dense::new(&mut store, "seq.angle", 2 * config.hidden, 1, &mut rng),
            )
        };
        Ok(Self {
            config,
            store,
            camera,
            map,
            fusion,
            cell,
            speed,
            angle,
        })
    }

    fn check(&self, sample: &SeqSample) -> Result<()> {
        for (f, m) in sample.features.iter().zip(&sample.map) {
            if f.len() != self.config.feature_dim || m.len() != self.config.map_dim {
                return Err(Error::Shape(format!(
                    "expected feature width {} and map width {}, got {} and {}",
                    self.config.feature_dim,
                    self.config.map_dim,
                    f.len(),
                    m.len()
                )));
            }
        }
        Ok(())
    }

    fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        features: &[f64],
        map: &[f64],
    ) -> trajkit_autodiff::Result<Var> {
        let f = tape.constant(Tensor::row(features.to_vec()));
        let m = tape.constant(Tensor::row(map.to_vec()));
        let f = self.camera.forward(tape, store, f)?;
        let f = tape.relu(f)?;
        let m = self.map.forward(tape, store, m)?;
        let m = tape.relu(m)?;
        let fm = tape.concat(&[f, m])?;
        let x = self.fusion.forward(tape, store, fm)?;
        tape.tanh(x)
    }

    /// Raw (unscaled) speed and angle outputs, each `[1, 1]`.
    pub fn forward_raw(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sample: &SeqSample,
    ) -> Result<(Var, Var)> {
        self.check(sample)?;
        let x0 = self.embed(tape, store, &sample.features[0], &sample.map[0])?;
        let x1 = self.embed(tape, store, &sample.features[1], &sample.map[1])?;
        let h0 = tape.constant(Tensor::zeros(&[1, self.config.hidden]));
        let h = self.cell.step(tape, store, x0, h0)?;
        let h = self.cell.step(tape, store, x1, h)?;
        let joined = tape.concat(&[h, x1])?;
        let s = self.speed.forward(tape, store, joined)?;
        let a = self.angle.forward(tape, store, joined)?;
        Ok((s, a))
    }

    /// MSE(speed) + MSE(angle), both measured in scaled units.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, sample: &SeqSample) -> Result<Var> {
        let (s, a) = self.forward_raw(tape, store, sample)?;
        let st = tape.constant(Tensor::row(vec![sample.speed / self.config.speed_scale]));
        let at = tape.constant(Tensor::row(vec![sample.angle / self.config.angle_scale]));
        let ls = tape.mse_loss(s, st)?;
        let la = tape.mse_loss(a, at)?;
        Ok(tape.add(ls, la)?)
    }

    /// Predicted (speed m/s, steering angle degrees).
    pub fn predict(&self, sample: &SeqSample) -> Result<(f64, f64)> {
        let mut tape = Tape::new();
        let (s, a) = self.forward_raw(&mut tape, &self.store, sample)?;
        Ok((
            tape.value(s).item() * self.config.speed_scale,
            tape.value(a).item() * self.config.angle_scale,
        ))
    }
}

/// Convenience wrapper matching the op signature.
pub fn seq_forward(
    model: &SeqRegressor,
    features_t0: &[f64],
    features_t1: &[f64],
    map_t0: &[f64],
    map_t1: &[f64],
) -> Result<(f64, f64)> {
    model.predict(&SeqSample {
        features: [features_t0.to_vec(), features_t1.to_vec()],
        map: [map_t0.to_vec(), map_t1.to_vec()],
        speed: 0.0,
        angle: 0.0,
    })
}

/// Synthetic sequence data. Hidden state per timestep is (speed, angle, road
/// curvature); camera features see speed and angle, map vectors see curvature.
/// Targets extrapolate the observed change one more step. The projections
/// are the same for every `seed`, so datasets drawn with different seeds
/// share one sensor model.
pub fn generate_seq(count: usize, config: &SeqConfig, seed: u64) -> Vec<SeqSample> {
    let mut sensor = ChaCha8Rng::seed_from_u64(SENSOR_SEED);
    let cam = glorot_uniform(&[config.feature_dim, 3], 3, config.feature_dim, &mut sensor);
    let map = glorot_uniform(&[config.map_dim, 2], 2, config.map_dim, &mut sensor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    let project = |m: &Tensor, v: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        let cols = v.len();
        m.data()
            .chunks(cols)
            .map(|row| {
                (row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * 2.0).tanh()
                    + noise.sample(rng)
            })
            .collect()
    };
    (0..count)
        .map(|_| {
            let speed1: f64 = rng.random_range(0.0..20.0);
            let accel: f64 = rng.random_range(-3.0..3.0);
            let curvature: f64 = rng.random_range(-1.0..1.0);
            let angle1 = curvature * 25.0 + rng.random_range(-3.0..3.0);
            let angle_rate: f64 = rng.random_range(-10.0..10.0);
            let speed0 = (speed1 - accel * STEP_SECONDS).max(0.0);
            let angle0 = angle1 - angle_rate * STEP_SECONDS;
            let obs = |s: f64, a: f64| [s / 10.0 - 1.0, a / 30.0, 1.0];
            let f0 = project(&cam, &obs(speed0, angle0), &mut rng);
            let f1 = project(&cam, &obs(speed1, angle1), &mut rng);
            let m0 = project(&map, &[curvature, 1.0], &mut rng);
            let m1 = project(&map, &[curvature, 1.0], &mut rng);
            SeqSample {
                features: [f0, f1],
                map: [m0, m1],
                speed: (2.0 * speed1 - speed0).max(0.0),
                angle: 2.0 * angle1 - angle0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqReport {
    pub mse_speed: f64,
    pub mse_angle: f64,
}

pub fn evaluate_seq(model: &SeqRegressor, samples: &[SeqSample]) -> Result<SeqReport> {
    if samples.is_empty() {
        return Err(Error::Config("no evaluation samples".into()));
    }
    let (mut s, mut a) = (0.0, 0.0);
    for sample in samples {
        let (ps, pa) = model.predict(sample)?;
        s += (ps - sample.speed).powi(2);
        a += (pa - sample.angle).powi(2);
    }
    let n = samples.len() as f64;
    Ok(SeqReport {
        mse_speed: s / n,
        mse_angle: a / n,
    })
}

/// Minibatch Adam; returns the mean loss of each epoch.
pub fn train_seq(
    model: &mut SeqRegressor,
    samples: &[SeqSample],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(&model.store, lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(batch_size.max(1)) {
            let mut acc = GradAccumulator::new();
            for &i in batch {
                let mut tape = Tape::new();
                let loss = model.loss(&mut tape, &model.store, &samples[i])?;
                total += tape.value(loss).item();
                acc.add(&tape.backward(loss)?);
            }
            adam.step(&mut model.store, &acc.mean())?;
        }
        history.push(total / samples.len().max(1) as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_layers_predict_zero() {
        let cfg = SeqConfig::default();
        let model = SeqRegressor::new(cfg, 1).unwrap();
        let data = generate_seq(3, &cfg, 2);
        for s in &data {
            assert_eq!(model.predict(s).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let model = SeqRegressor::new(SeqConfig::default(), 1).unwrap();
        let r = seq_forward(&model, &[0.0; 16], &[0.0; 15], &[0.0; 8], &[0.0; 8]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SeqConfig::default();
        assert_eq!(generate_seq(20, &cfg, 5), generate_seq(20, &cfg, 5));
        assert_ne!(generate_seq(20, &cfg, 5), generate_seq(20, &cfg, 6));
    }

    #[test]
    fn evaluation_ignores_sample_order() {
        let cfg = SeqConfig {
            zero_init_output: false,
            ..SeqConfig::default()
        };
        let model = SeqRegressor::new(cfg, 3).unwrap();
        let data = generate_seq(30, &cfg, 9);
        let mut reversed = data.clone();
        reversed.reverse();
        let a = evaluate_seq(&model, &data).unwrap();
        let b = evaluate_seq(&model, &reversed).unwrap();
        assert!(
            (a.mse_speed - b.mse_speed).abs() < 1e-9 && (a.mse_angle - b.mse_angle).abs() < 1e-9
        );
    }

    #[test]
    fn training_reduces_error() {
        let cfg = SeqConfig::default();
        let train = generate_seq(300, &cfg, 11);
        let test = generate_seq(100, &cfg, 12);
        let mut model = SeqRegressor::new(cfg, 4).unwrap();
        let before = evaluate_seq(&model, &test).unwrap();
        let losses = train_seq(&mut model, &train, 30, 0.01, 16, 4).unwrap();
        let after = evaluate_seq(&model, &test).unwrap();
        assert!(losses.last().unwrap() < &losses[0]);
        assert!(
            after.mse_speed < 0.5 * before.mse_speed,
            "{before:?} -> {after:?}"
        );
        assert!(
            after.mse_angle < 0.5 * before.mse_angle,
            "{before:?} -> {after:?}"
        );
    }
}
