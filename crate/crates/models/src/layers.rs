use rand::Rng;
use trajkit_autodiff::{glorot_uniform, ParamId, ParamStore, Result, Tape, Tensor, Var};

/// Fully connected layer on `[1, n]` rows.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(&[inputs, outputs], inputs, outputs, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[1, outputs]));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    /// All-zero weights and bias.
    pub fn zeroed(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::zeros(&[inputs, outputs]));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[1, outputs]));
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// 3×3 valid convolution, ReLU, 2×2 max-pool.
#[derive(Debug, Clone, Copy)]
pub struct ConvBlock {
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl ConvBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let kernel = store.add(
            format!("{name}.kernel"),
            glorot_uniform(&[cout, cin, 3, 3], cin * 9, cout * 9, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Self { kernel, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let k = tape.param(store, self.kernel);
        let b = tape.param(store, self.bias);
        let c = tape.conv2d(x, k, b)?;
        let r = tape.relu(c)?;
        tape.maxpool2x2(r)
    }
}
