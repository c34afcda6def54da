//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Each op appends a node
//! holding its output value and whatever it needs for the backward pass;
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into leaves. Parameters live outside the graph in a
//! [`ParamStore`](crate::params::ParamStore) and are copied in as leaves.

mod conv;
pub mod gradcheck;
mod loss;
mod norm;
mod pointwise;
mod pool;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::params::{BufferId, ParamId};
use crate::tensor::{Scalar, Tensor};

pub use conv::{conv_output_len, Padding};
pub use norm::{BN_EPSILON, BN_MOMENTUM};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether batch normalization uses batch statistics or running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Deliberate backward-pass bugs, used to prove the gradient checker bites.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Conv weight gradient written with the kernel's spatial axes swapped.
    ConvWeightGradTransposed,
}

/// Batch statistics emitted by a train-mode batch norm, to be folded into the
/// running estimates of the owning layer.
#[derive(Debug, Clone)]
pub struct StatUpdate<T> {
    pub mean_buffer: BufferId,
    pub var_buffer: BufferId,
    pub momentum: f64,
    pub batch_mean: Vec<T>,
    /// Unbiased per-channel variance.
    pub batch_var: Vec<T>,
}

/// Running statistics handed to [`Graph::batch_norm`].
pub enum BnStats<'a, T> {
    /// Normalize with batch statistics; report them against these buffers.
    Train {
        mean_buffer: BufferId,
        var_buffer: BufferId,
        momentum: f64,
    },
    /// Normalize with batch statistics and discard them.
    TrainDetached,
    Eval { mean: &'a Tensor<T>, var: &'a Tensor<T> },
}

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    AvgPool2(Var),
    MaxPool2 { input: Var, argmax: Vec<u32> },
    Upsample2(Var),
    Concat(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    GlobalAvgPool(Var),
    Linear { input: Var, weight: Var, bias: Var },
    Sum(Var),
    SoftmaxCe { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    SigmoidBce { logits: Var, target: Var },
    Mse { pred: Var, target: Var },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { input, weight, bias, .. } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::BatchNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::AvgPool2(a)
            | Op::Upsample2(a)
            | Op::GlobalAvgPool(a)
            | Op::Sum(a) => vec![*a],
            Op::MaxPool2 { input, .. } => vec![*input],
            Op::Concat(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Linear { input, weight, bias } => vec![*input, *weight, *bias],
            Op::SoftmaxCe { logits, .. } => vec![*logits],
            Op::SigmoidBce { logits, target } => vec![*logits, *target],
            Op::Mse { pred, target } => vec![*pred, *target],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::AvgPool2(_) => "avg_pool2",
            Op::MaxPool2 { .. } => "max_pool2",
            Op::Upsample2(_) => "upsample2",
            Op::Concat(..) => "concat_channels",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::GlobalAvgPool(_) => "global_avg_pool",
            Op::Linear { .. } => "linear",
            Op::Sum(_) => "sum",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
            Op::SigmoidBce { .. } => "sigmoid_bce",
            Op::Mse { .. } => "mse_loss",
        }
    }
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
    pub param: Option<ParamId>,
    pub grad: Option<Tensor<T>>,
}

/// Tape of operations recorded during one forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
    stat_updates: Vec<StatUpdate<T>>,
    fault: Option<Fault>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), consumed: false, stat_updates: Vec::new(), fault: None }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input leaf.
    pub fn input(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push_leaf(value, requires_grad, None)
    }

    /// Adds a leaf bound to a stored parameter.
    pub fn param_leaf(&mut self, value: Tensor<T>, id: ParamId) -> Var {
        self.push_leaf(value, true, Some(id))
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad, param, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad, param: None, grad: None });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated into a leaf by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Leaves bound to parameters, with their accumulated gradients.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.as_ref()?)))
    }

    /// Batch-norm statistics recorded in train mode, in execution order.
    pub fn take_stat_updates(&mut self) -> Vec<StatUpdate<T>> {
        std::mem::take(&mut self.stat_updates)
    }

    /// How many recorded ops consume `v` as an input.
    pub fn use_count(&self, v: Var) -> usize {
        self.nodes
            .iter()
            .map(|n| n.op.inputs().iter().filter(|&&i| i == v).count())
            .sum()
    }

    /// Number of recorded ops with the given name (e.g. `"conv2d"`).
    pub fn op_count(&self, name: &str) -> usize {
        self.nodes.iter().filter(|n| n.op.name() == name).count()
    }

    /// Fingerprint of every non-differentiable branch taken by the forward
    /// pass: relu activation pattern and max-pool winners. Two evaluations
    /// with equal fingerprints lie on the same smooth piece of the function.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => {
                    for &x in self.nodes[a.0].value.data() {
                        (x > T::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool2 { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Back-propagates from a scalar `loss`, accumulating into every leaf that
    /// requires a gradient. A graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::GraphConsumed);
        }
        let shape = self.nodes[loss.0].value.shape().to_vec();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&shape, T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(g) => g.add_assign(&upstream),
                    None => node.grad = Some(upstream),
                }
                continue;
            }
            let contributions = self.backward_op(idx, &upstream)?;
            for (var, g) in contributions {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        // Saved activations are no longer needed.
        for node in &mut self.nodes {
            if let Op::BatchNorm { xhat, .. } = &mut node.op {
                *xhat = Vec::new();
            }
        }
        Ok(())
    }

    fn backward_op(&self, idx: usize, up: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[idx];
        let val = |v: &Var| &self.nodes[v.0].value;
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        Ok(match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d { input, weight, bias, stride, padding } => {
                let grads = conv::conv2d_backward(
                    val(input),
                    val(weight),
                    up,
                    *stride,
                    *padding,
                    wants(input),
                    self.fault,
                );
                let mut out = vec![];
                if let Some(dx) = grads.input {
                    out.push((*input, dx));
                }
                out.push((*weight, grads.weight));
                if let Some(b) = bias {
                    out.push((*b, grads.bias));
                }
                out
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, train } => {
                let (dx, dg, db) =
                    norm::batch_norm_backward(val(input), val(gamma), xhat, inv_std, *train, up);
                vec![(*input, dx), (*gamma, dg), (*beta, db)]
            }
            Op::Relu(a) => vec![(*a, pointwise::relu_backward(val(a), up))],
            Op::Sigmoid(a) => vec![(*a, pointwise::sigmoid_backward(&node.value, up))],
            Op::AvgPool2(a) => vec![(*a, pool::avg_pool2_backward(val(a).shape(), up))],
            Op::MaxPool2 { input, argmax } => {
                vec![(*input, pool::max_pool2_backward(val(input).shape(), argmax, up))]
            }
            Op::Upsample2(a) => vec![(*a, pool::upsample2_backward(val(a).shape(), up))],
            Op::Concat(a, b) => {
                let (ga, gb) = pointwise::concat_backward(val(a).shape(), val(b).shape(), up);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) => vec![(*a, up.clone()), (*b, up.clone())],
            Op::Mul(a, b) => {
                let (ga, gb) = pointwise::mul_backward(val(a), val(b), up);
                vec![(*a, ga), (*b, gb)]
            }
            Op::GlobalAvgPool(a) => vec![(*a, pool::global_avg_pool_backward(val(a).shape(), up))],
            Op::Linear { input, weight, bias } => {
                let (dx, dw, db) = pointwise::linear_backward(val(input), val(weight), up);
                vec![(*input, dx), (*weight, dw), (*bias, db)]
            }
            Op::Sum(a) => vec![(*a, Tensor::full(val(a).shape(), up.data()[0]))],
            Op::SoftmaxCe { logits, labels, probs } => {
                vec![(*logits, loss::softmax_ce_backward(val(logits).shape(), labels, probs, up))]
            }
            Op::SigmoidBce { logits, target } => {
                let (dz, dt) = loss::sigmoid_bce_backward(val(logits), val(target), up);
                vec![(*logits, dz), (*target, dt)]
            }
            Op::Mse { pred, target } => {
                let (dp, dt) = loss::mse_backward(val(pred), val(target), up);
                vec![(*pred, dp), (*target, dt)]
            }
        })
    }

    // ---- op constructors -------------------------------------------------

    /// 2-D cross-correlation of `[N,Cin,H,W]` with `[Cout,Cin,k,k]` weights.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let b = bias.map(|b| self.value(b));
        let out = conv::conv2d_forward(self.value(input), self.value(weight), b, stride, padding)?;
        self.push(out, Op::Conv2d { input, weight, bias, stride, padding })
    }

    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: BnStats<'_, T>,
        epsilon: f64,
    ) -> Result<Var> {
        let fwd = norm::batch_norm_forward(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            &stats,
            epsilon,
        )?;
        if let (BnStats::Train { mean_buffer, var_buffer, momentum }, Some((mean, var))) =
            (&stats, fwd.batch_stats)
        {
            self.stat_updates.push(StatUpdate {
                mean_buffer: *mean_buffer,
                var_buffer: *var_buffer,
                momentum: *momentum,
                batch_mean: mean,
                batch_var: var,
            });
        }
        let train = !matches!(stats, BnStats::Eval { .. });
        self.push(
            fwd.output,
            Op::BatchNorm { input, gamma, beta, xhat: fwd.xhat, inv_std: fwd.inv_std, train },
        )
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = pointwise::relu(self.value(a));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = pointwise::sigmoid(self.value(a));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn avg_pool2(&mut self, a: Var) -> Result<Var> {
        let out = pool::avg_pool2(self.value(a))?;
        self.push(out, Op::AvgPool2(a))
    }

    pub fn max_pool2(&mut self, a: Var) -> Result<Var> {
        let (out, argmax) = pool::max_pool2(self.value(a))?;
        self.push(out, Op::MaxPool2 { input: a, argmax })
    }

    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let out = pool::upsample2(self.value(a))?;
        self.push(out, Op::Upsample2(a))
    }

    /// Channel concatenation, `a`'s channels first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = pointwise::concat_channels(self.value(a), self.value(b))?;
        self.push(out, Op::Concat(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = pointwise::zip_same("add", self.value(a), self.value(b), |x, y| x + y)?;
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = pointwise::zip_same("mul", self.value(a), self.value(b), |x, y| x * y)?;
        self.push(out, Op::Mul(a, b))
    }

    /// `[N,C,H,W] -> [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let out = pool::global_avg_pool(self.value(a))?;
        self.push(out, Op::GlobalAvgPool(a))
    }

    /// `[N,Cin] x [Cout,Cin]^T + [Cout]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = pointwise::linear(self.value(input), self.value(weight), self.value(bias))?;
        self.push(out, Op::Linear { input, weight, bias })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = loss::softmax_ce(self.value(logits), labels)?;
        self.push(loss, Op::SoftmaxCe { logits, labels: labels.to_vec(), probs })
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `target` in [0,1].
    pub fn sigmoid_bce(&mut self, logits: Var, target: Var) -> Result<Var> {
        let loss = loss::sigmoid_bce(self.value(logits), self.value(target))?;
        self.push(loss, Op::SigmoidBce { logits, target })
    }

    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = loss::mse(self.value(pred), self.value(target))?;
        self.push(loss, Op::Mse { pred, target })
    }
}
