//! Named parameters, freezing, SGD, and the binary checkpoint format.
//!
//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic  b"TKCP"
//! version u32 (= 1)
//! count   u32
//! per parameter:
//!   name_len u32, name (UTF-8), rank u32, dims u32 × rank, data f64 × Π dims
//! ```

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::Gradients;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TKCP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

/// Glorot-uniform sample in ±√(6 / (fan_in + fan_out)).
pub fn glorot_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("sized to shape")
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter {
            name,
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Freeze or unfreeze every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) -> usize {
        let mut n = 0;
        for p in self
            .params
            .iter_mut()
            .filter(|p| p.name.starts_with(prefix))
        {
            p.trainable = trainable;
            n += 1;
        }
        n
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Serialize parameters whose names start with `prefix` ("" for all).
    pub fn write_checkpoint(&self, prefix: &str, out: &mut impl Write) -> Result<()> {
        let selected: Vec<&Parameter> = self
            .params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .collect();
        out.write_all(&CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&u32_of(selected.len())?.to_le_bytes())?;
        for p in selected {
            out.write_all(&u32_of(p.name.len())?.to_le_bytes())?;
            out.write_all(p.name.as_bytes())?;
            out.write_all(&u32_of(p.value.shape().len())?.to_le_bytes())?;
            for &d in p.value.shape() {
                out.write_all(&u32_of(d)?.to_le_bytes())?;
            }
            for v in p.value.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self, prefix: &str) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(prefix, &mut buf)
            .expect("writing to memory cannot fail");
        buf
    }

    /// Copy values from checkpoint entries into same-named parameters.
    ///
    /// Every entry must name an existing parameter of identical shape.
    /// Returns the number of parameters updated.
    pub fn load_entries(&mut self, entries: &[(String, Tensor)]) -> Result<usize> {
        for (name, value) in entries {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name:?}")))?;
            let have = self.params[id.0].value.shape();
            if have != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name:?} has shape {have:?}, checkpoint holds {:?}",
                    value.shape()
                )));
            }
        }
        for (name, value) in entries {
            let id = self.find(name).expect("checked above");
            self.params[id.0].value = value.clone();
        }
        Ok(entries.len())
    }
}

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{n} does not fit in u32")))
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(input)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(input)? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = read_u32(input)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name =
            String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(input)? as usize;
        let dims = (0..rank)
            .map(|_| read_u32(input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        entries.push((name, Tensor::new(dims, data)?));
    }
    Ok(entries)
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// p ← p − lr·g for every trainable parameter that received a gradient.
pub fn sgd_step(store: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    for (p, g) in store.params.iter_mut().zip(grads) {
        if let (true, Some(g)) = (p.trainable, g) {
            for (w, d) in p.value.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * d;
            }
        }
    }
    Ok(())
}

/// Convenience for a single reverse pass.
pub fn sgd_step_from(store: &mut ParamStore, grads: &Gradients, lr: f64) -> Result<()> {
    sgd_step(store, grads.param_slots(), lr)
}

/// Adam moments for every parameter in a store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .params
            .iter()
            .map(|p| vec![0.0; p.value.numel()])
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update of the trainable parameters.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (p, g)) in store.params.iter_mut().zip(grads).enumerate() {
            let (true, Some(g)) = (p.trainable, g) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, d)) in p.value.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * d;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * d * d;
                *w -= self.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
