use rand::Rng;

use crate::autograd::{BnStats, Graph, Mode, Padding, Var, BN_EPSILON, BN_MOMENTUM};
use crate::error::Result;
use crate::params::{BufferId, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Everything a layer needs during one forward pass.
pub(crate) struct Ctx<'a, T> {
    pub g: &'a mut Graph<T>,
    pub vars: &'a [Var],
    pub params: &'a ParamStore<T>,
    pub mode: Mode,
    pub padding: Padding,
}

impl<T: Scalar> Ctx<'_, T> {
    fn var(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }
}

/// Allocates named parameters with the standard initialization.
pub(crate) struct Init<'r, T, R> {
    pub params: ParamStore<T>,
    pub rng: &'r mut R,
}

impl<T: Scalar, R: Rng> Init<'_, T, R> {
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> Conv {
        let weight = self.params.add_he(format!("{name}.weight"), &[cout, cin, k, k], cin * k * k, self.rng);
        let bias = bias.then(|| self.params.add(format!("{name}.bias"), Tensor::zeros(&[cout])));
        Conv { weight, bias }
    }

    pub fn bn(&mut self, name: &str, c: usize) -> Bn {
        let gamma = self.params.add(format!("{name}.gamma"), Tensor::full(&[c], T::one()));
        let beta = self.params.add(format!("{name}.beta"), Tensor::zeros(&[c]));
        let stats = self.bn_stats(name, c);
        Bn { gamma, beta, stats }
    }

    /// Running mean and variance buffers named `{prefix}.running_mean/var`.
    pub fn bn_stats(&mut self, prefix: &str, c: usize) -> RunningStats {
        RunningStats {
            mean: self.params.add_buffer(format!("{prefix}.running_mean"), Tensor::zeros(&[c])),
            var: self.params.add_buffer(format!("{prefix}.running_var"), Tensor::full(&[c], T::one())),
        }
    }

    pub fn dense(&mut self, name: &str, cin: usize, cout: usize) -> Dense {
        Dense {
            weight: self.params.add_he(format!("{name}.weight"), &[cout, cin], cin, self.rng),
            bias: self.params.add(format!("{name}.bias"), Tensor::zeros(&[cout])),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (cx.var(self.weight), self.bias.map(|b| cx.var(b)));
        cx.g.conv2d(x, w, b, 1, cx.padding)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RunningStats {
    pub mean: BufferId,
    pub var: BufferId,
}

#[derive(Debug, Clone)]
pub(crate) struct Bn {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: RunningStats,
}

impl Bn {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        self.forward_with(cx, x, self.stats)
    }

    /// Normalizes with this layer's affine parameters but the given running
    /// statistics.
    pub fn forward_with<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var, rs: RunningStats) -> Result<Var> {
        let (gamma, beta) = (cx.var(self.gamma), cx.var(self.beta));
        let params = cx.params;
        let stats = match cx.mode {
            Mode::Train => BnStats::Train { mean_buffer: rs.mean, var_buffer: rs.var, momentum: BN_MOMENTUM },
            Mode::Eval => BnStats::Eval { mean: params.buffer(rs.mean), var: params.buffer(rs.var) },
        };
        cx.g.batch_norm(x, gamma, beta, stats, BN_EPSILON)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (cx.var(self.weight), cx.var(self.bias));
        cx.g.linear(x, w, b)
    }
}

/// Recurrent convolutional layer unfolded for `t` steps.
///
/// The feedforward response `ff = conv_f(x) + b` is computed once. Then
/// `h(0) = relu(bn(ff))` and `h(s) = relu(bn(ff + conv_r(h(s-1))))`, with the
/// recurrent kernel and the batch-norm scale and shift shared by every step.
/// Each step keeps its own running statistics (`bn.step{s}.*` for s >= 1),
/// since the inputs of different steps are differently distributed.
#[derive(Debug, Clone)]
pub struct RclUnit {
    pub(crate) wf: Conv,
    pub(crate) wr: Conv,
    pub(crate) bn: Bn,
    /// Statistics for steps 1..=t.
    pub(crate) step_stats: Vec<RunningStats>,
    pub(crate) t: usize,
}

impl RclUnit {
    pub(crate) fn new<T: Scalar, R: Rng>(init: &mut Init<'_, T, R>, name: &str, cin: usize, cout: usize, t: usize) -> Self {
        RclUnit {
            wf: init.conv(&format!("{name}.wf"), cin, cout, 3, true),
            wr: init.conv(&format!("{name}.wr"), cout, cout, 3, false),
            bn: init.bn(&format!("{name}.bn"), cout),
            step_stats: (1..=t).map(|s| init.bn_stats(&format!("{name}.bn.step{s}"), cout)).collect(),
            t,
        }
    }

    pub(crate) fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let ff = self.wf.forward(cx, x)?;
        let mut h = self.bn.forward(cx, ff)?;
        h = cx.g.relu(h)?;
        for step in 0..self.t {
            let r = self.wr.forward(cx, h)?;
            let s = cx.g.add(ff, r)?;
            // A unit unfolded beyond its construction depth reuses the last statistics.
            let rs = self.step_stats.get(step).or(self.step_stats.last()).copied().unwrap_or(self.bn.stats);
            h = self.bn.forward_with(cx, s, rs)?;
            h = cx.g.relu(h)?;
        }
        Ok(h)
    }

    /// Parameter id of the shared recurrent kernel.
    pub fn recurrent_weight(&self) -> ParamId {
        self.wr.weight
    }
}

/// Dense block whose layers are RCL units; each layer sees the block input
/// concatenated with every earlier layer's output.
#[derive(Debug, Clone)]
pub(crate) struct DcrcBlock {
    pub layers: Vec<RclUnit>,
}

impl DcrcBlock {
    pub fn new<T: Scalar, R: Rng>(
        init: &mut Init<'_, T, R>,
        name: &str,
        cin: usize,
        layers: usize,
        growth: usize,
        t: usize,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| RclUnit::new(init, &format!("{name}.layer{}", l + 1), cin + l * growth, growth, t))
            .collect();
        DcrcBlock { layers }
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut feats = x;
        for layer in &self.layers {
            let out = layer.forward(cx, feats)?;
            feats = cx.g.concat_channels(feats, out)?;
        }
        Ok(feats)
    }
}

/// BN, 1x1 conv, 2x2 average pool.
#[derive(Debug, Clone)]
pub(crate) struct Transition {
    pub bn: Bn,
    pub conv: Conv,
}

impl Transition {
    pub fn new<T: Scalar, R: Rng>(init: &mut Init<'_, T, R>, name: &str, cin: usize, cout: usize) -> Self {
        Transition { bn: init.bn(&format!("{name}.bn"), cin), conv: init.conv(&format!("{name}.conv"), cin, cout, 1, true) }
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.bn.forward(cx, x)?;
        let h = self.conv.forward(cx, h)?;
        cx.g.avg_pool2(h)
    }
}

/// Two stacked RCL units around a residual connection; a 1x1 conv matches
/// the input width when it differs from the output width.
#[derive(Debug, Clone)]
pub(crate) struct RecurrentResidual {
    pub matcher: Option<Conv>,
    pub rcl1: RclUnit,
    pub rcl2: RclUnit,
}

impl RecurrentResidual {
    pub fn new<T: Scalar, R: Rng>(init: &mut Init<'_, T, R>, name: &str, cin: usize, cout: usize, t: usize) -> Self {
        RecurrentResidual {
            matcher: (cin != cout).then(|| init.conv(&format!("{name}.match"), cin, cout, 1, true)),
            rcl1: RclUnit::new(init, &format!("{name}.rcl1"), cout, cout, t),
            rcl2: RclUnit::new(init, &format!("{name}.rcl2"), cout, cout, t),
        }
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let matched = match &self.matcher {
            Some(conv) => conv.forward(cx, x)?,
            None => x,
        };
        let h = self.rcl1.forward(cx, matched)?;
        let h = self.rcl2.forward(cx, h)?;
        cx.g.add(matched, h)
    }
}
