//! Operation tape and reverse pass.
//!
//! Nodes are appended in evaluation order, so every node's inputs precede it
//! and a single reverse sweep is a valid topological traversal. Nodes that do
//! not depend on any trainable parameter carry `requires_grad = false` and are
//! skipped by the reverse pass.

use crate::error::{shape_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{softmax, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
    },
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one reverse pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to any node that required one.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    /// Accumulated gradient of a parameter; `None` if frozen or unused.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.index()).and_then(Option::as_ref)
    }

    /// One tensor per parameter in the store, zeros where no gradient flowed.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, p)| {
                self.param(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
            })
            .collect()
    }
}

/// Parameter gradients summed over several reverse passes (a minibatch).
#[derive(Debug, Clone, Default)]
pub struct GradAccumulator {
    params: Vec<Option<Tensor>>,
    count: usize,
}

impl GradAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, grads: &Gradients) {
        if self.params.len() < grads.params.len() {
            self.params.resize(grads.params.len(), None);
        }
        for (slot, g) in self.params.iter_mut().zip(&grads.params) {
            if let Some(g) = g {
                match slot {
                    Some(acc) => acc.add_assign(g),
                    None => *slot = Some(g.clone()),
                }
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean gradient per parameter over the added passes.
    pub fn mean(&self) -> Vec<Option<Tensor>> {
        let n = self.count.max(1) as f64;
        self.params
            .iter()
            .map(|g| {
                g.as_ref()
                    .map(|t| t.with_data(t.data().iter().map(|v| v / n).collect()))
            })
            .collect()
    }

    pub fn clear(&mut self) {
        self.params.clear();
        self.count = 0;
    }
}

impl Gradients {
    /// Per-parameter view usable by optimizers.
    pub fn param_slots(&self) -> &[Option<Tensor>] {
        &self.params
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        node_op: Op,
        requires_grad: bool,
    ) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(op));
        }
        self.nodes.push(Node {
            value,
            op: node_op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input: no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Bind a stored parameter. Frozen parameters act as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.nodes.push(Node {
            value: p.value.clone(),
            op: Op::Leaf,
            requires_grad: p.trainable,
            param: Some(id),
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", &[sa, sb]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a_ip = ad[i * k + p];
                if a_ip == 0.0 {
                    continue;
                }
                for (o, b) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += a_ip * b;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push(
            "matmul",
            Tensor::new(vec![m, n], out)?,
            Op::MatMul(a, b),
            rg,
        )
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, &[sa, sb]));
        }
        Ok(())
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        node: Op,
    ) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = av.with_data(data);
        let rg = self.rg(&[a, b]);
        self.push(op, value, node, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, op: &'static str, a: Var, f: impl Fn(f64) -> f64, node: Op) -> Result<Var> {
        let av = self.value(a);
        let value = av.with_data(av.data().iter().map(|x| f(*x)).collect());
        let rg = self.rg(&[a]);
        self.push(op, value, node, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.map("scale", a, |x| factor * x, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    /// Valid (no padding), stride-1 convolution.
    ///
    /// `input` is `[C_in, H, W]`, `kernel` is `[C_out, C_in, kh, kw]`,
    /// `bias` is `[C_out]`; the output is `[C_out, H − kh + 1, W − kw + 1]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernel), self.value(bias));
        let (sx, sk, sb) = (x.shape(), k.shape(), b.shape());
        if sx.len() != 3
            || sk.len() != 4
            || sk[1] != sx[0]
            || sb != [sk[0]]
            || sk[2] > sx[1]
            || sk[3] > sx[2]
        {
            return Err(shape_err("conv2d", &[sx, sk, sb]));
        }
        let g = ConvGeom::new(sx, sk);
        let mut out = vec![0.0; g.cout * g.oh * g.ow];
        let (xd, kd) = (x.data(), k.data());
        for co in 0..g.cout {
            let plane = &mut out[co * g.oh * g.ow..(co + 1) * g.oh * g.ow];
            plane.fill(b.data()[co]);
            for ci in 0..g.cin {
                for ki in 0..g.kh {
                    for kj in 0..g.kw {
                        let w = kd[((co * g.cin + ci) * g.kh + ki) * g.kw + kj];
                        for r in 0..g.oh {
                            let src = &xd[(ci * g.h + r + ki) * g.w + kj..][..g.ow];
                            for (o, s) in plane[r * g.ow..(r + 1) * g.ow].iter_mut().zip(src) {
                                *o += w * s;
                            }
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[input, kernel, bias]);
        let value = Tensor::new(vec![g.cout, g.oh, g.ow], out)?;
        self.push(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
            },
            rg,
        )
    }

    /// 2×2 max pooling with stride 2 over `[C, H, W]`; odd trailing rows and
    /// columns are dropped. Ties resolve to the first maximum in scan order.
    pub fn maxpool2x2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let s = x.shape();
        if s.len() != 3 || s[1] < 2 || s[2] < 2 {
            return Err(shape_err("maxpool2x2", &[s]));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        let xd = x.data();
        for ch in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = (ch * h + 2 * r + dr) * w + 2 * col + dc;
                        if xd[i] > best.0 {
                            best = (xd[i], i);
                        }
                    }
                    out.push(best.0);
                    argmax.push(best.1);
                }
            }
        }
        let rg = self.rg(&[input]);
        self.push(
            "maxpool2x2",
            Tensor::new(vec![c, oh, ow], out)?,
            Op::MaxPool2 { input, argmax },
            rg,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if shape.iter().product::<usize>() != av.numel() {
            return Err(shape_err("reshape", &[av.shape(), shape]));
        }
        let value = Tensor::new(shape.to_vec(), av.data().to_vec())?;
        let rg = self.rg(&[a]);
        self.push("reshape", value, Op::Reshape(a), rg)
    }

    /// Reshape to a `[1, n]` row.
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        self.reshape(a, &[1, n])
    }

    /// Concatenate `[1, n_i]` rows into `[1, Σ n_i]`.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of nothing".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != 1 {
                let shapes: Vec<&[usize]> = parts.iter().map(|v| self.value(*v).shape()).collect();
                return Err(shape_err("concat", &shapes));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        self.push("concat", Tensor::row(data), Op::Concat(parts.to_vec()), rg)
    }

    /// Columns `start..start + len` of a `[1, n]` row.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.value(a).shape();
        if s.len() != 2 || s[0] != 1 || start + len > s[1] || len == 0 {
            return Err(shape_err("slice", &[s, &[start, len]]));
        }
        let value = Tensor::row(self.value(a).data()[start..start + len].to_vec());
        let rg = self.rg(&[a]);
        self.push("slice", value, Op::Slice { input: a, start }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push("sum", Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// −log softmax(logits)[target] for a `[K]` or `[1, K]` logit vector.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = self.value(logits);
        let s = lv.shape();
        let k = lv.numel();
        if !(s.len() == 1 || (s.len() == 2 && s[0] == 1)) || target >= k {
            return Err(shape_err("softmax_cross_entropy", &[s, &[target]]));
        }
        let d = lv.data();
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + d.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let loss = log_z - d[target];
        let probs = softmax(d);
        let rg = self.rg(&[logits]);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            rg,
        )
    }

    /// Mean of squared differences.
    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse_loss", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let n = av.numel().max(1) as f64;
        let total: f64 = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(&[a, b]);
        self.push("mse_loss", Tensor::scalar(total / n), Op::Mse(a, b), rg)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut params: Vec<Option<Tensor>> = Vec::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Some(pid) = node.param {
                let slot = pid.index();
                if params.len() <= slot {
                    params.resize(slot + 1, None);
                }
                match &mut params[slot] {
                    Some(acc) => acc.add_assign(&g),
                    s @ None => *s = Some(g.clone()),
                }
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        // Drop gradients for nodes that never needed one.
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => {
                for (a, d) in t.data_mut().iter_mut().zip(delta) {
                    *a += d;
                }
            }
            slot @ None => *slot = Some(self.nodes[v.0].value.with_data(delta)),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.requires_grad(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bv.data()[p * n..(p + 1) * n];
                            da[i * k + p] = gd[i * n..(i + 1) * n]
                                .iter()
                                .zip(brow)
                                .map(|(x, y)| x * y)
                                .sum();
                        }
                    }
                    self.accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let a_ip = av.data()[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (o, x) in db[p * n..(p + 1) * n]
                                .iter_mut()
                                .zip(&gd[i * n..(i + 1) * n])
                            {
                                *o += a_ip * x;
                            }
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, gd.iter().zip(bv).map(|(x, y)| x * y).collect());
                self.accumulate(grads, *b, gd.iter().zip(av).map(|(x, y)| x * y).collect());
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, gd.iter().map(|x| f * x).collect()),
            Op::Relu(a) => {
                let av = self.value(*a).data();
                self.accumulate(
                    grads,
                    *a,
                    gd.iter()
                        .zip(av)
                        .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                        .collect(),
                );
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                self.accumulate(
                    grads,
                    *a,
                    gd.iter().zip(out).map(|(x, s)| x * s * (1.0 - s)).collect(),
                );
            }
            Op::Tanh(a) => {
                let out = node.value.data();
                self.accumulate(
                    grads,
                    *a,
                    gd.iter().zip(out).map(|(x, t)| x * (1.0 - t * t)).collect(),
                );
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
            } => {
                let (x, k) = (self.value(*input), self.value(*kernel));
                let geom = ConvGeom::new(x.shape(), k.shape());
                let (xd, kd) = (x.data(), k.data());
                let plane = geom.oh * geom.ow;
                if self.requires_grad(*bias) {
                    let db = (0..geom.cout)
                        .map(|co| gd[co * plane..(co + 1) * plane].iter().sum())
                        .collect();
                    self.accumulate(grads, *bias, db);
                }
                if self.requires_grad(*kernel) {
                    let mut dk = vec![0.0; kd.len()];
                    for co in 0..geom.cout {
                        let gp = &gd[co * plane..(co + 1) * plane];
                        for ci in 0..geom.cin {
                            for ki in 0..geom.kh {
                                for kj in 0..geom.kw {
                                    let mut acc = 0.0;
                                    for r in 0..geom.oh {
                                        let src =
                                            &xd[(ci * geom.h + r + ki) * geom.w + kj..][..geom.ow];
                                        acc += gp[r * geom.ow..(r + 1) * geom.ow]
                                            .iter()
                                            .zip(src)
                                            .map(|(a, b)| a * b)
                                            .sum::<f64>();
                                    }
                                    dk[((co * geom.cin + ci) * geom.kh + ki) * geom.kw + kj] = acc;
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *kernel, dk);
                }
                if self.requires_grad(*input) {
                    let mut dx = vec![0.0; xd.len()];
                    for co in 0..geom.cout {
                        let gp = &gd[co * plane..(co + 1) * plane];
                        for ci in 0..geom.cin {
                            for ki in 0..geom.kh {
                                for kj in 0..geom.kw {
                                    let w =
                                        kd[((co * geom.cin + ci) * geom.kh + ki) * geom.kw + kj];
                                    for r in 0..geom.oh {
                                        let dst = &mut dx[(ci * geom.h + r + ki) * geom.w + kj..]
                                            [..geom.ow];
                                        for (d, gv) in
                                            dst.iter_mut().zip(&gp[r * geom.ow..(r + 1) * geom.ow])
                                        {
                                            *d += w * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *input, dx);
                }
            }
            Op::MaxPool2 { input, argmax } => {
                let mut dx = vec![0.0; self.value(*input).numel()];
                for (gv, &i) in gd.iter().zip(argmax) {
                    dx[i] += gv;
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Reshape(a) => self.accumulate(grads, *a, gd.to_vec()),
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).numel();
                    self.accumulate(grads, *p, gd[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Slice { input, start } => {
                let mut dx = vec![0.0; self.value(*input).numel()];
                dx[*start..*start + gd.len()].copy_from_slice(gd);
                self.accumulate(grads, *input, dx);
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                self.accumulate(grads, *a, vec![gd[0]; n]);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let mut d: Vec<f64> = probs.iter().map(|p| gd[0] * p).collect();
                d[*target] -= gd[0];
                self.accumulate(grads, *logits, d);
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let scale = 2.0 * gd[0] / av.len().max(1) as f64;
                let da: Vec<f64> = av.iter().zip(bv).map(|(x, y)| scale * (x - y)).collect();
                self.accumulate(grads, *b, da.iter().map(|v| -v).collect());
                self.accumulate(grads, *a, da);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(sx: &[usize], sk: &[usize]) -> Self {
        let (cin, h, w) = (sx[0], sx[1], sx[2]);
        let (cout, kh, kw) = (sk[0], sk[2], sk[3]);
        ConvGeom {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            oh: h - kh + 1,
            ow: w - kw + 1,
        }
    }
}
