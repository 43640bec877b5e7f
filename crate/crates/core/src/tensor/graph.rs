use std::cell::Cell;
use std::fmt;

use super::kernels::{self, BatchNormCache, ConvGeometry};
use super::params::{ParamId, ParamStore};
use super::precision;
use super::{Result, Shape, Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EltwiseOp {
    Add,
    Mul,
    /// Ties route the gradient to the first operand.
    Max,
}

type CustomBackward = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

enum Op {
    Leaf,
    Param(ParamId),
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    Eltwise {
        op: EltwiseOp,
        a: Var,
        b: Var,
    },
    Sigmoid(Var),
    Relu(Var),
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        cache: BatchNormCache,
    },
    Concat(Vec<Var>),
    Resize(Var),
    AvgPool2x(Var),
    MaxPool2x {
        input: Var,
        argmax: Vec<usize>,
    },
    Sum(Var),
    Scale(Var, f64),
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::Conv { .. } => "conv2d",
            Op::Eltwise { .. } => "eltwise",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Concat(_) => "concat",
            Op::Resize(_) => "resize",
            Op::AvgPool2x(_) => "avg_pool",
            Op::MaxPool2x { .. } => "max_pool",
            Op::Sum(_) => "sum",
            Op::Scale(..) => "scale",
            Op::Custom { .. } => "custom",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Backward rules that can be deliberately corrupted, to prove that a
/// gradient check catches a broken derivative.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptRule {
    Sigmoid,
    BatchNorm,
}

thread_local! {
    static CORRUPT: Cell<Option<CorruptRule>> = const { Cell::new(None) };
}

#[doc(hidden)]
pub fn with_corrupted_rule<R>(rule: CorruptRule, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<CorruptRule>);
    impl Drop for Restore {
        fn drop(&mut self) {
            CORRUPT.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(CORRUPT.with(|c| c.replace(Some(rule))));
    f()
}

fn corruption(rule: CorruptRule) -> f64 {
    if CORRUPT.with(|c| c.get()) == Some(rule) {
        1.05
    } else {
        1.0
    }
}

/// Tape of recorded operations for one forward/backward episode.
///
/// A graph is confined to one thread; independent graphs may be evaluated in
/// parallel against a shared [`ParamStore`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::gradients`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op, needs_grad: bool) -> Var {
        precision::round_slice(value.data_mut());
        value.requires_grad = needs_grad;
        value.grad = None;
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// A constant: no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A free variable whose gradient is reported by [`Graph::gradients`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).value.clone();
        self.push(value, Op::Param(id), true)
    }

    pub fn param_named(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let id = store.id(name).ok_or_else(|| TensorError::UnknownParameter(name.to_string()))?;
        Ok(self.param(store, id))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        self.conv2d_dilated(input, weight, bias, stride, padding, 1)
    }

    pub fn conv2d_dilated(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry { stride, padding, dilation };
        let out = kernels::conv2d_forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            geom,
        )?;
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::Conv { input, weight, bias, geom }, needs))
    }

    pub fn eltwise(&mut self, op: EltwiseOp, a: Var, b: Var) -> Result<Var> {
        let name = match op {
            EltwiseOp::Add => "add",
            EltwiseOp::Mul => "mul",
            EltwiseOp::Max => "max",
        };
        let out = self.value(a).zip_map(self.value(b), name, |x, y| match op {
            EltwiseOp::Add => x + y,
            EltwiseOp::Mul => x * y,
            EltwiseOp::Max => {
                if x >= y {
                    x
                } else {
                    y
                }
            }
        })?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Eltwise { op, a, b }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.eltwise(EltwiseOp::Add, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.eltwise(EltwiseOp::Mul, a, b)
    }

    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        self.eltwise(EltwiseOp::Max, a, b)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let needs = self.needs(x);
        self.push(out, Op::Sigmoid(x), needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    /// Batch normalization with per-batch channel statistics followed by the
    /// affine map `gamma * x_hat + beta`. `gamma` and `beta` hold one value
    /// per channel.
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var) -> Result<Var> {
        let x = self.value(input);
        let c = x.channels();
        for (which, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).numel() != c {
                return Err(TensorError::precondition(
                    "batch_norm",
                    format!("{which} has {} entries for {c} channels", self.value(v).numel()),
                ));
            }
        }
        let cache = kernels::batch_norm(x)?;
        let [n, _, h, w] = x.shape();
        let plane = h * w;
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = cache.normalized.clone();
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for v in &mut out[base..base + plane] {
                    *v = g[ci] * *v + b[ci];
                }
            }
        }
        let out = Tensor::new(x.shape(), out)?;
        let needs = self.needs(input) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(out, Op::BatchNorm { input, gamma, beta, cache }, needs))
    }

    /// The Bconv block: 3x3 convolution (no bias), batch normalization, ReLU.
    pub fn bconv(&mut self, x: Var, weight: Var, gamma: Var, beta: Var, stride: usize, dilation: usize) -> Result<Var> {
        let k = self.shape(weight)[2];
        let padding = dilation * (k / 2);
        let conv = self.conv2d_dilated(x, weight, None, stride, padding, dilation)?;
        let bn = self.batch_norm(conv, gamma, beta)?;
        Ok(self.relu(bn))
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::precondition("concat_channels", "nothing to concatenate"))?;
        let [n, _, h, w] = self.shape(first);
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != n || s[2] != h || s[3] != w {
                return Err(TensorError::ShapeMismatch { op: "concat_channels", left: self.shape(first), right: s });
            }
            total += s[1];
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for ni in 0..n {
            for &p in parts {
                let t = self.value(p);
                let c = t.channels();
                data.extend_from_slice(&t.data()[ni * c * plane..(ni + 1) * c * plane]);
            }
        }
        let out = Tensor::new([n, total, h, w], data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), needs))
    }

    /// Bilinear resize with half-pixel sampling (align-corners = false).
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::precondition("resize_bilinear", "output size must be positive"));
        }
        let out = kernels::resize_bilinear(self.value(x), out_h, out_w);
        let needs = self.needs(x);
        Ok(self.push(out, Op::Resize(x), needs))
    }

    pub fn upsample_bilinear_2x(&mut self, x: Var) -> Var {
        let [_, _, h, w] = self.shape(x);
        self.resize_bilinear(x, 2 * h, 2 * w).expect("doubling a valid shape")
    }

    pub fn downsample_avg_2x(&mut self, x: Var) -> Result<Var> {
        kernels::check_even("downsample_avg_2x", self.shape(x))?;
        let out = kernels::avg_pool2x(self.value(x));
        let needs = self.needs(x);
        Ok(self.push(out, Op::AvgPool2x(x), needs))
    }

    pub fn maxpool_2x(&mut self, x: Var) -> Result<Var> {
        kernels::check_even("maxpool_2x", self.shape(x))?;
        let (out, argmax) = kernels::max_pool2x(self.value(x));
        let needs = self.needs(x);
        Ok(self.push(out, Op::MaxPool2x { input: x, argmax }, needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let needs = self.needs(x);
        self.push(out, Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| v * k);
        let needs = self.needs(x);
        self.push(out, Op::Scale(x, k), needs)
    }

    /// Records an operation computed outside the graph. `backward` maps the
    /// output gradient to one gradient buffer per input, in order.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor,
        backward: impl Fn(&[f64]) -> Vec<Vec<f64>> + 'static,
    ) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(value, Op::Custom { inputs: inputs.to_vec(), backward: Box::new(backward) }, needs)
    }

    /// Reverse pass from a scalar `loss`, returning gradients of every node
    /// that depends on a differentiable leaf.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let loss_shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Reverse pass that also accumulates parameter gradients into `store`.
    /// Every parameter ends with a gradient buffer; unreachable ones stay
    /// zero. Repeated calls accumulate until [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        store.ensure_grads();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.grads.get(idx).and_then(|g| g.as_ref())) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => {
                    for (a, c) in acc.iter_mut().zip(contrib) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv { input, weight, bias, geom } => {
                let cg = kernels::conv2d_backward(self.value(*input), self.value(*weight), g, *geom);
                send(*input, cg.input);
                send(*weight, cg.weight);
                if let Some(b) = bias {
                    send(*b, cg.bias);
                }
            }
            Op::Eltwise { op, a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                match op {
                    EltwiseOp::Add => {
                        send(*a, g.to_vec());
                        send(*b, g.to_vec());
                    }
                    EltwiseOp::Mul => {
                        send(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                        send(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
                    }
                    EltwiseOp::Max => {
                        let first: Vec<bool> = av.iter().zip(bv).map(|(x, y)| x >= y).collect();
                        send(*a, g.iter().zip(&first).map(|(&g, &f)| if f { g } else { 0.0 }).collect());
                        send(*b, g.iter().zip(&first).map(|(&g, &f)| if f { 0.0 } else { g }).collect());
                    }
                }
            }
            Op::Sigmoid(x) => {
                let k = corruption(CorruptRule::Sigmoid);
                let y = node.value.data();
                send(*x, g.iter().zip(y).map(|(g, y)| k * g * y * (1.0 - y)).collect());
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                send(*x, g.iter().zip(xv).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect());
            }
            Op::BatchNorm { input, gamma, beta, cache } => {
                let shape = self.shape(*input);
                let [n, c, h, w] = shape;
                let plane = h * w;
                let gam = self.value(*gamma).data();
                let mut g_gamma = vec![0.0; c];
                let mut g_beta = vec![0.0; c];
                let mut g_norm = vec![0.0; g.len()];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        for i in base..base + plane {
                            g_gamma[ci] += g[i] * cache.normalized[i];
                            g_beta[ci] += g[i];
                            g_norm[i] = g[i] * gam[ci];
                        }
                    }
                }
                let k = corruption(CorruptRule::BatchNorm);
                let mut gi = kernels::batch_norm_backward(shape, cache, &g_norm);
                gi.iter_mut().for_each(|v| *v *= k);
                send(*input, gi);
                send(*gamma, g_gamma);
                send(*beta, g_beta);
            }
            Op::Concat(parts) => {
                let [n, total, h, w] = node.value.shape();
                let plane = h * w;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    let mut part = Vec::with_capacity(n * c * plane);
                    for ni in 0..n {
                        let base = (ni * total + offset) * plane;
                        part.extend_from_slice(&g[base..base + c * plane]);
                    }
                    send(p, part);
                    offset += c;
                }
            }
            Op::Resize(x) => {
                let [_, _, oh, ow] = node.value.shape();
                send(*x, kernels::resize_bilinear_backward(self.shape(*x), g, oh, ow));
            }
            Op::AvgPool2x(x) => send(*x, kernels::avg_pool2x_backward(self.shape(*x), g)),
            Op::MaxPool2x { input, argmax } => {
                let mut gi = vec![0.0; self.value(*input).numel()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    gi[src] += gv;
                }
                send(*input, gi);
            }
            Op::Sum(x) => send(*x, vec![g[0]; self.value(*x).numel()]),
            Op::Scale(x, k) => send(*x, g.iter().map(|v| v * k).collect()),
            Op::Custom { inputs, backward } => {
                for (&v, contrib) in inputs.iter().zip(backward(g)) {
                    send(v, contrib);
                }
            }
        }
    }
}
