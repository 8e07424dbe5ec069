//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward rule. Nodes only ever reference earlier nodes, so
//! the tape is topologically ordered by construction and `backward` is a
//! single reverse sweep.

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::real::Real;
use crate::shape::{self, Pool};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

/// What a second `backward` call on the same tape does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackwardMode {
    #[default]
    ErrorOnRepeat,
    Accumulate,
}

/// Lower clamp applied to probabilities before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Softmax {
        input: Var,
    },
    AvgPool {
        input: Var,
        window: (usize, usize),
    },
    Reshape {
        input: Var,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    SelectRows {
        input: Var,
        indices: Vec<usize>,
    },
    SelectChannel {
        input: Var,
        channels: Vec<usize>,
    },
    ChannelMul {
        features: Var,
        attention: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    Sum {
        input: Var,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    SoftNll {
        probs: Var,
        targets: Vec<T>,
        norm: T,
    },
    BinaryCe {
        probs: Var,
        targets: Vec<T>,
        norm: T,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Linear { .. } => "linear",
            Op::Act { kind, .. } => match kind {
                Activation::Relu => "relu",
                Activation::Sigmoid => "sigmoid",
                Activation::Tanh => "tanh",
            },
            Op::Softmax { .. } => "softmax",
            Op::AvgPool { .. } => "avg_pool2d",
            Op::Reshape { .. } => "reshape",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::SelectRows { .. } => "select_rows",
            Op::SelectChannel { .. } => "select_channel",
            Op::ChannelMul { .. } => "channel_mul",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Sum { .. } => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::SoftNll { .. } => "soft_nll",
            Op::BinaryCe { .. } => "binary_ce",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Single-owner recording of a forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_runs: usize,
    mode: BackwardMode,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_runs: 0,
            mode: BackwardMode::default(),
        }
    }

    pub fn with_mode(mode: BackwardMode) -> Self {
        Self {
            mode,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Copies `v` into a new constant leaf, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    /// Gradient of the last backward target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Tensor::new(self.nodes[v.0].value.shape(), g.clone()).ok()
    }

    pub fn grad_data(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0)?.as_deref()
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_runs = 0;
    }

    fn push(&mut self, shape: &[usize], data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        let id = self.nodes.len();
        if let Some(_bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(TensorError::NonFinite {
                op: op.name(),
                node: id,
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = Tensor::new(shape, data)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(id))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let bs = bias.map(|b| self.shape(b).to_vec());
        let out_shape = shape::conv2d(&xs, &ws, bs.as_deref(), stride, padding)?;
        let geom = ConvGeom {
            batch: xs[0],
            in_c: xs[1],
            h: xs[2],
            w: xs[3],
            out_c: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad: padding,
            ho: out_shape[2],
            wo: out_shape[3],
        };
        let (out, cols) = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        // The unfolded input is only needed for the weight gradient.
        let cols = if self.requires_grad(weight) { cols } else { Vec::new() };
        self.push(
            &out_shape,
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            &inputs,
        )
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        let bs = bias.map(|b| self.shape(b).to_vec());
        let out_shape = shape::linear(&xs, &ws, bs.as_deref())?;
        let out = kernels::linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            xs[0],
            xs[1],
            ws[1],
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(&out_shape, out, Op::Linear { input, weight, bias }, &inputs)
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let x = self.value(input);
        let shape = x.shape().to_vec();
        let data: Vec<T> = match kind {
            Activation::Relu => x.data().iter().map(|&v| v.max(T::zero())).collect(),
            Activation::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
            Activation::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
        };
        self.push(&shape, data, Op::Act { input, kind }, &[input])
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        self.activation(input, Activation::Tanh)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let shape = x.shape().to_vec();
        let k = *shape.last().expect("non-empty shape");
        let data = kernels::softmax_rows(x.data(), k);
        self.push(&shape, data, Op::Softmax { input }, &[input])
    }

    pub fn avg_pool2d(&mut self, input: Var, pool: Pool) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let out_shape = shape::avg_pool2d(&xs, pool)?;
        let window = match pool {
            Pool::Global => (xs[2], xs[3]),
            Pool::Window(k) => (k, k),
        };
        let out = kernels::avg_pool_forward(self.value(input).data(), &xs, window, &out_shape);
        self.push(&out_shape, out, Op::AvgPool { input, window }, &[input])
    }

    pub fn reshape(&mut self, input: Var, target: &[usize]) -> Result<Var> {
        let out_shape = shape::reshape(self.shape(input), target)?;
        let data = self.value(input).data().to_vec();
        self.push(&out_shape, data, Op::Reshape { input }, &[input])
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let out_shape = shape::flatten(self.shape(input))?;
        self.reshape(input, &out_shape)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let shapes: Vec<Vec<usize>> = inputs.iter().map(|&v| self.shape(v).to_vec()).collect();
        let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
        let out_shape = shape::concat(&refs, axis)?;
        let (outer, total, inner) = kernels::axis_split(&out_shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&v, s) in inputs.iter().zip(&shapes) {
                let chunk = s[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..][..chunk]);
            }
        }
        self.push(
            &out_shape,
            data,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    pub fn slice(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let out_shape = shape::slice(&xs, axis, start, len)?;
        let (outer, total, inner) = kernels::axis_split(&xs, axis);
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * total + start) * inner..][..len * inner]);
        }
        self.push(&out_shape, data, Op::Slice { input, axis, start }, &[input])
    }

    /// Gathers entries along axis 0 (repeats allowed).
    pub fn select_rows(&mut self, input: Var, indices: &[usize]) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let out_shape = shape::select_rows(&xs, indices)?;
        let row: usize = xs[1..].iter().product();
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            data.extend_from_slice(&src[i * row..][..row]);
        }
        self.push(
            &out_shape,
            data,
            Op::SelectRows {
                input,
                indices: indices.to_vec(),
            },
            &[input],
        )
    }

    /// Picks channel `channels[m]` of every sample `m` in an NCHW tensor.
    pub fn select_channel(&mut self, input: Var, channels: &[usize]) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let out_shape = shape::select_channel(&xs, channels)?;
        let plane = xs[2] * xs[3];
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(xs[0] * plane);
        for (m, &c) in channels.iter().enumerate() {
            data.extend_from_slice(&src[(m * xs[1] + c) * plane..][..plane]);
        }
        self.push(
            &out_shape,
            data,
            Op::SelectChannel {
                input,
                channels: channels.to_vec(),
            },
            &[input],
        )
    }

    /// `features[M,C,H,W] ⊙ attention[M,1,H,W]`, broadcast over channels.
    pub fn channel_mul(&mut self, features: Var, attention: Var) -> Result<Var> {
        let fs = self.shape(features).to_vec();
        let out_shape = shape::channel_mul(&fs, self.shape(attention))?;
        let plane = fs[2] * fs[3];
        let f = self.value(features).data();
        let a = self.value(attention).data();
        let mut data = Vec::with_capacity(f.len());
        for m in 0..fs[0] {
            let att = &a[m * plane..][..plane];
            for c in 0..fs[1] {
                let src = &f[(m * fs[1] + c) * plane..][..plane];
                data.extend(src.iter().zip(att).map(|(&x, &w)| x * w));
            }
        }
        self.push(
            &out_shape,
            data,
            Op::ChannelMul {
                features,
                attention,
            },
            &[features, attention],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out_shape = shape::elementwise("add", self.shape(a), self.shape(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.push(&out_shape, data, Op::Add { a, b }, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out_shape = shape::elementwise("mul", self.shape(a), self.shape(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.push(&out_shape, data, Op::Mul { a, b }, &[a, b])
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let data = self.value(input).data().iter().map(|&x| x * factor).collect();
        self.push(&shape, data, Op::Scale { input, factor }, &[input])
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total: T = self.value(input).data().iter().copied().sum();
        self.push(&[1], vec![total], Op::Sum { input }, &[input])
    }

    /// Mean over the batch of `-ln p[label]` with `p = softmax(logits)`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        shape::cross_entropy(&ls, labels.len())?;
        let (b, k) = (ls[0], ls[1]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(TensorError::OutOfRange {
                op: "cross_entropy",
                index: bad,
                bound: k,
            });
        }
        let probs = kernels::softmax_rows(self.value(logits).data(), k);
        let floor = T::of(PROB_FLOOR);
        let total: T = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs[i * k + y].max(floor).ln())
            .sum();
        let loss = total / T::of(b as f64);
        self.push(
            &[1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// `-Σ m·ln(clamp(l)) / norm` for probabilities `l` and soft targets `m`.
    pub fn soft_nll(&mut self, probs: Var, targets: &Tensor<T>, norm: T) -> Result<Var> {
        shape::elementwise("soft_nll", self.shape(probs), targets.shape())?;
        let floor = T::of(PROB_FLOOR);
        let total: T = self
            .value(probs)
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&l, &m)| -m * l.max(floor).min(T::one()).ln())
            .sum();
        self.push(
            &[1],
            vec![total / norm],
            Op::SoftNll {
                probs,
                targets: targets.data().to_vec(),
                norm,
            },
            &[probs],
        )
    }

    /// Per-pixel binary cross entropy `-Σ [m ln l + (1-m) ln(1-l)] / norm`.
    pub fn binary_ce(&mut self, probs: Var, targets: &Tensor<T>, norm: T) -> Result<Var> {
        shape::elementwise("binary_ce", self.shape(probs), targets.shape())?;
        let floor = T::of(PROB_FLOOR);
        let total: T = self
            .value(probs)
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&l, &m)| {
                let p = l.max(floor).min(T::one());
                let q = (T::one() - l).max(floor).min(T::one());
                -(m * p.ln() + (T::one() - m) * q.ln())
            })
            .sum();
        self.push(
            &[1],
            vec![total / norm],
            Op::BinaryCe {
                probs,
                targets: targets.data().to_vec(),
                norm,
            },
            &[probs],
        )
    }

    /// Populates gradients of `loss` for every node that requires one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if self.backward_runs > 0 && self.mode == BackwardMode::ErrorOnRepeat {
            return Err(TensorError::Contract(
                "backward already ran on this tape; reset grads or use accumulate mode".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
        }
        // Leaves keep their gradients; unreachable trainable leaves get zeros.
        if self.grads.len() < self.nodes.len() {
            self.grads.resize(self.nodes.len(), None);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !(node.requires_grad && matches!(node.op, Op::Leaf)) {
                continue;
            }
            let fresh = grads[i]
                .take()
                .unwrap_or_else(|| vec![T::zero(); node.value.numel()]);
            match (&mut self.grads[i], self.mode) {
                (Some(existing), BackwardMode::Accumulate) => {
                    for (e, f) in existing.iter_mut().zip(fresh) {
                        *e += f;
                    }
                }
                (slot, _) => *slot = Some(fresh),
            }
        }
        self.backward_runs += 1;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let acc = |grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let need = (
                    self.requires_grad(*input),
                    self.requires_grad(*weight),
                    bias.is_some_and(|b| self.requires_grad(b)),
                );
                let cg = kernels::conv2d_backward(g, self.value(*weight).data(), cols, geom, need);
                if let Some(dx) = cg.input {
                    acc(grads, *input, dx);
                }
                if let Some(dw) = cg.weight {
                    acc(grads, *weight, dw);
                }
                if let (Some(b), Some(db)) = (bias, cg.bias) {
                    acc(grads, *b, db);
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let xs = self.shape(*input);
                let (b, d) = (xs[0], xs[1]);
                let k = self.shape(*weight)[1];
                if self.requires_grad(*input) {
                    let dx = kernels::linear_backward_input(g, self.value(*weight).data(), b, d, k);
                    acc(grads, *input, dx);
                }
                if self.requires_grad(*weight) {
                    let dw = kernels::linear_backward_weight(g, self.value(*input).data(), b, d, k);
                    acc(grads, *weight, dw);
                }
                if let Some(bv) = bias {
                    if self.requires_grad(*bv) {
                        let mut db = vec![T::zero(); k];
                        for row in g.chunks_exact(k) {
                            for (d, &x) in db.iter_mut().zip(row) {
                                *d += x;
                            }
                        }
                        acc(grads, *bv, db);
                    }
                }
            }
            Op::Act { input, kind } => {
                let y = node.value.data();
                let dx = match kind {
                    Activation::Relu => g
                        .iter()
                        .zip(self.value(*input).data())
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect(),
                    Activation::Sigmoid => g
                        .iter()
                        .zip(y)
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect(),
                    Activation::Tanh => g
                        .iter()
                        .zip(y)
                        .map(|(&g, &y)| g * (T::one() - y * y))
                        .collect(),
                };
                acc(grads, *input, dx);
            }
            Op::Softmax { input } => {
                let k = *node.value.shape().last().expect("non-empty");
                acc(grads, *input, kernels::softmax_rows_backward(node.value.data(), g, k));
            }
            Op::AvgPool { input, window } => {
                let dx = kernels::avg_pool_backward(g, self.shape(*input), *window, node.value.shape());
                acc(grads, *input, dx);
            }
            Op::Reshape { input } => acc(grads, *input, g.to_vec()),
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = kernels::axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let extent = self.shape(v)[*axis];
                    if self.requires_grad(v) {
                        let chunk = extent * inner;
                        let mut dx = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            dx.extend_from_slice(&g[(o * total + offset) * inner..][..chunk]);
                        }
                        acc(grads, v, dx);
                    }
                    offset += extent;
                }
            }
            Op::Slice { input, axis, start } => {
                let xs = self.shape(*input);
                let (outer, total, inner) = kernels::axis_split(xs, *axis);
                let len = node.value.shape()[*axis];
                let mut dx = vec![T::zero(); self.value(*input).numel()];
                for o in 0..outer {
                    dx[(o * total + start) * inner..][..len * inner]
                        .copy_from_slice(&g[o * len * inner..][..len * inner]);
                }
                acc(grads, *input, dx);
            }
            Op::SelectRows { input, indices } => {
                let xs = self.shape(*input);
                let row: usize = xs[1..].iter().product();
                let mut dx = vec![T::zero(); self.value(*input).numel()];
                for (j, &r) in indices.iter().enumerate() {
                    for (d, &s) in dx[r * row..][..row].iter_mut().zip(&g[j * row..][..row]) {
                        *d += s;
                    }
                }
                acc(grads, *input, dx);
            }
            Op::SelectChannel { input, channels } => {
                let xs = self.shape(*input);
                let plane = xs[2] * xs[3];
                let mut dx = vec![T::zero(); self.value(*input).numel()];
                for (m, &c) in channels.iter().enumerate() {
                    dx[(m * xs[1] + c) * plane..][..plane].copy_from_slice(&g[m * plane..][..plane]);
                }
                acc(grads, *input, dx);
            }
            Op::ChannelMul {
                features,
                attention,
            } => {
                let fs = self.shape(*features);
                let (m_count, c_count, plane) = (fs[0], fs[1], fs[2] * fs[3]);
                let f = self.value(*features).data();
                let a = self.value(*attention).data();
                if self.requires_grad(*features) {
                    let mut df = vec![T::zero(); f.len()];
                    for m in 0..m_count {
                        let att = &a[m * plane..][..plane];
                        for c in 0..c_count {
                            let base = (m * c_count + c) * plane;
                            for p in 0..plane {
                                df[base + p] = g[base + p] * att[p];
                            }
                        }
                    }
                    acc(grads, *features, df);
                }
                if self.requires_grad(*attention) {
                    let mut da = vec![T::zero(); a.len()];
                    for m in 0..m_count {
                        for c in 0..c_count {
                            let base = (m * c_count + c) * plane;
                            for p in 0..plane {
                                da[m * plane + p] += g[base + p] * f[base + p];
                            }
                        }
                    }
                    acc(grads, *attention, da);
                }
            }
            Op::Add { a, b } => {
                acc(grads, *a, g.to_vec());
                acc(grads, *b, g.to_vec());
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if self.requires_grad(*a) {
                    acc(grads, *a, g.iter().zip(bv).map(|(&g, &y)| g * y).collect());
                }
                if self.requires_grad(*b) {
                    acc(grads, *b, g.iter().zip(av).map(|(&g, &x)| g * x).collect());
                }
            }
            Op::Scale { input, factor } => {
                acc(grads, *input, g.iter().map(|&g| g * *factor).collect());
            }
            Op::Sum { input } => {
                acc(grads, *input, vec![g[0]; self.value(*input).numel()]);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / T::of(labels.len() as f64);
                let floor = T::of(PROB_FLOOR);
                let mut dx = vec![T::zero(); probs.len()];
                for (i, &y) in labels.iter().enumerate() {
                    if probs[i * k + y] < floor {
                        continue;
                    }
                    for j in 0..k {
                        let onehot = if j == y { T::one() } else { T::zero() };
                        dx[i * k + j] = (probs[i * k + j] - onehot) * scale;
                    }
                }
                acc(grads, *logits, dx);
            }
            Op::SoftNll {
                probs,
                targets,
                norm,
            } => {
                let floor = T::of(PROB_FLOOR);
                let scale = g[0] / *norm;
                let dx = self
                    .value(*probs)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&l, &m)| {
                        if l < floor || l > T::one() {
                            T::zero()
                        } else {
                            -m / l * scale
                        }
                    })
                    .collect();
                acc(grads, *probs, dx);
            }
            Op::BinaryCe {
                probs,
                targets,
                norm,
            } => {
                let floor = T::of(PROB_FLOOR);
                let scale = g[0] / *norm;
                let dx = self
                    .value(*probs)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&l, &m)| {
                        let mut d = T::zero();
                        if l >= floor && l <= T::one() {
                            d -= m / l;
                        }
                        let q = T::one() - l;
                        if q >= floor && q <= T::one() {
                            d += (T::one() - m) / q;
                        }
                        d * scale
                    })
                    .collect();
                acc(grads, *probs, dx);
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
