//! The three model families and their building blocks.
//!
//! A [`Model`] owns a [`ParamStore`] and a fixed layer structure. Forward
//! passes record onto a caller-supplied [`Graph`]; in train mode the batch
//! norm statistics are left on the graph and folded in with
//! [`Model::apply_stat_updates`].

mod layers;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::gradcheck::{grad_check, random_tensor, GradCheckOptions, GradCheckReport};
use crate::autograd::{Fault, Graph, Mode, Padding, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

use layers::{Bn, Conv, Ctx, DcrcBlock, Dense, Init, RecurrentResidual, Transition};
pub use layers::RclUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Dcrn,
    R2UNet,
    UdNet,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Dcrn => "dcrn",
            Family::R2UNet => "r2unet",
            Family::UdNet => "udnet",
        }
    }

    pub fn head(self) -> Head {
        match self {
            Family::Dcrn => Head::Softmax,
            Family::R2UNet => Head::SigmoidMask,
            Family::UdNet => Head::LinearDensity,
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcrn" => Ok(Family::Dcrn),
            "r2unet" => Ok(Family::R2UNet),
            "udnet" => Ok(Family::UdNet),
            _ => Err(Error::Config(format!("unknown model family {s:?} (expected dcrn, r2unet or udnet)"))),
        }
    }
}

/// What the final layer produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Class logits `[N, K]`.
    Softmax,
    /// Per-pixel foreground probability `[N, 1, H, W]`.
    SigmoidMask,
    /// Unconstrained density map `[N, 1, H, W]`.
    LinearDensity,
}

/// Architecture hyperparameters. Round-trips through a one-line text form
/// such as `family=dcrn;in=3;classes=2;t=2;blocks=4;layers=3;growth=5;stem=16;channels=16,32,64,128;padding=same;scale=1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: Family,
    pub in_channels: usize,
    /// Classifier outputs; 1 for the pixel-wise families.
    pub num_classes: usize,
    pub t: usize,
    pub blocks: usize,
    pub layers: usize,
    pub growth: usize,
    pub stem_channels: usize,
    /// Encoder widths, the last being the bottleneck.
    pub channels: Vec<usize>,
    pub padding: Padding,
    /// Factor applied to density targets; density-head outputs are divided
    /// by it. Always 1 for the other heads.
    pub density_scale: u32,
}

impl ModelSpec {
    pub fn dcrn(in_channels: usize, num_classes: usize) -> Self {
        ModelSpec {
            family: Family::Dcrn,
            in_channels,
            num_classes,
            t: 2,
            blocks: 4,
            layers: 3,
            growth: 5,
            stem_channels: 16,
            channels: vec![16, 32, 64, 128],
            padding: Padding::Same,
            density_scale: 1,
        }
    }

    pub fn r2unet(in_channels: usize) -> Self {
        ModelSpec { family: Family::R2UNet, num_classes: 1, ..Self::dcrn(in_channels, 1) }
    }

    pub fn udnet(in_channels: usize) -> Self {
        ModelSpec { family: Family::UdNet, num_classes: 1, t: 3, ..Self::dcrn(in_channels, 1) }
    }

    pub fn for_family(family: Family, in_channels: usize, num_classes: usize) -> Self {
        match family {
            Family::Dcrn => Self::dcrn(in_channels, num_classes),
            Family::R2UNet => Self::r2unet(in_channels),
            Family::UdNet => Self::udnet(in_channels),
        }
    }

    pub fn with_t(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn with_density_scale(mut self, scale: u32) -> Self {
        self.density_scale = scale;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 {
            return bad("in_channels must be positive".into());
        }
        if self.density_scale == 0 || (self.family != Family::UdNet && self.density_scale != 1) {
            return bad(format!("density scale {} is invalid for {}", self.density_scale, self.family.name()));
        }
        if self.padding == Padding::Valid {
            return bad("models keep spatial size; padding must be same or circular".into());
        }
        match self.family {
            Family::Dcrn => {
                if self.num_classes < 2 {
                    return bad(format!("dcrn needs at least 2 classes, got {}", self.num_classes));
                }
                if self.blocks == 0 || self.growth == 0 || self.stem_channels == 0 {
                    return bad("dcrn blocks, growth and stem width must be positive".into());
                }
                let mut c = self.stem_channels;
                for b in 0..self.blocks - 1 {
                    c = (c + self.layers * self.growth) / 2;
                    if c == 0 {
                        return bad(format!("transition {} would have zero channels", b + 1));
                    }
                }
            }
            Family::R2UNet | Family::UdNet => {
                if self.num_classes != 1 {
                    return bad(format!("{} has a single output channel", self.family.name()));
                }
                if self.channels.is_empty() || self.channels.contains(&0) {
                    return bad(format!("invalid channel chain {:?}", self.channels));
                }
            }
        }
        Ok(())
    }

    /// Input height and width must be multiples of this.
    pub fn spatial_divisor(&self) -> usize {
        match self.family {
            Family::Dcrn => 1 << (self.blocks - 1),
            Family::R2UNet | Family::UdNet => 1 << (self.channels.len() - 1),
        }
    }

    /// Feature widths after each stage, as `(stage, channels)`.
    pub fn channel_trace(&self) -> Vec<(String, usize)> {
        let mut trace = Vec::new();
        match self.family {
            Family::Dcrn => {
                let mut c = self.stem_channels;
                trace.push(("stem".to_string(), c));
                for b in 1..=self.blocks {
                    c += self.layers * self.growth;
                    trace.push((format!("block{b}"), c));
                    if b < self.blocks {
                        c /= 2;
                        trace.push((format!("trans{b}"), c));
                    }
                }
                trace.push(("dense".to_string(), self.num_classes));
            }
            Family::R2UNet | Family::UdNet => {
                let levels = self.channels.len() - 1;
                for (i, &c) in self.channels[..levels].iter().enumerate() {
                    trace.push((format!("enc{}", i + 1), c));
                }
                trace.push(("bottleneck".to_string(), self.channels[levels]));
                for i in (0..levels).rev() {
                    trace.push((format!("dec{}.concat", i + 1), self.channels[i] + self.channels[i + 1]));
                    trace.push((format!("dec{}", i + 1), self.channels[i]));
                }
                trace.push(("head".to_string(), 1));
            }
        }
        trace
    }
}

fn padding_name(p: Padding) -> &'static str {
    match p {
        Padding::Same => "same",
        Padding::Valid => "valid",
        Padding::Circular => "circular",
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chain: Vec<String> = self.channels.iter().map(usize::to_string).collect();
        write!(
            f,
            "family={};in={};classes={};t={};blocks={};layers={};growth={};stem={};channels={};padding={};scale={}",
            self.family.name(),
            self.in_channels,
            self.num_classes,
            self.t,
            self.blocks,
            self.layers,
            self.growth,
            self.stem_channels,
            chain.join(","),
            padding_name(self.padding),
            self.density_scale
        )
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fields = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("model spec field {part:?} is not key=value")))?;
            fields.push((k.trim(), v.trim()));
        }
        let family: Family = fields
            .iter()
            .find(|(k, _)| *k == "family")
            .ok_or_else(|| Error::Config("model spec has no family".into()))?
            .1
            .parse()?;
        let mut spec = ModelSpec::for_family(family, 1, 2);
        let num = |k: &str, v: &str| -> Result<usize> {
            v.parse().map_err(|_| Error::Config(format!("model spec {k}={v:?} is not a non-negative integer")))
        };
        for (k, v) in fields {
            match k {
                "family" => {}
                "in" => spec.in_channels = num(k, v)?,
                "classes" => spec.num_classes = num(k, v)?,
                "t" => spec.t = num(k, v)?,
                "blocks" => spec.blocks = num(k, v)?,
                "layers" => spec.layers = num(k, v)?,
                "growth" => spec.growth = num(k, v)?,
                "stem" => spec.stem_channels = num(k, v)?,
                "channels" => spec.channels = v.split(',').map(|c| num(k, c.trim())).collect::<Result<_>>()?,
                "scale" => {
                    spec.density_scale =
                        v.parse().map_err(|_| Error::Config(format!("model spec scale={v:?} is not a positive integer")))?
                }
                "padding" => {
                    spec.padding = match v {
                        "same" => Padding::Same,
                        "valid" => Padding::Valid,
                        "circular" => Padding::Circular,
                        _ => return Err(Error::Config(format!("unknown padding {v:?}"))),
                    }
                }
                _ => return Err(Error::Config(format!("unknown model spec field {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Pre-activation head output, what the loss consumes.
    pub logits: Var,
    /// Head output after the family's activation (sigmoid for masks).
    pub output: Var,
}

/// One row of the parameter table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamRow {
    pub name: String,
    pub shape: Vec<usize>,
    pub count: usize,
}

#[derive(Debug, Clone)]
struct Dcrn {
    stem: Conv,
    blocks: Vec<DcrcBlock>,
    transitions: Vec<Transition>,
    bn: Bn,
    dense: Dense,
}

#[derive(Debug, Clone)]
struct UNet {
    encoders: Vec<RecurrentResidual>,
    bottleneck: RecurrentResidual,
    /// Deepest level first.
    decoders: Vec<RecurrentResidual>,
    head: Conv,
}

#[derive(Debug, Clone)]
enum Net {
    Dcrn(Dcrn),
    UNet(UNet),
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    params: ParamStore<T>,
    net: Net,
}

impl<T: Scalar> Model<T> {
    /// Builds a model with parameters drawn from a ChaCha8 stream seeded by `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { params: ParamStore::new(), rng: &mut rng };
        let net = match spec.family {
            Family::Dcrn => {
                let stem = init.conv("stem", spec.in_channels, spec.stem_channels, 3, true);
                let mut c = spec.stem_channels;
                let mut blocks = Vec::new();
                let mut transitions = Vec::new();
                for b in 1..=spec.blocks {
                    blocks.push(DcrcBlock::new(&mut init, &format!("block{b}"), c, spec.layers, spec.growth, spec.t));
                    c += spec.layers * spec.growth;
                    if b < spec.blocks {
                        transitions.push(Transition::new(&mut init, &format!("trans{b}"), c, c / 2));
                        c /= 2;
                    }
                }
                let bn = init.bn("final.bn", c);
                let dense = init.dense("dense", c, spec.num_classes);
                Net::Dcrn(Dcrn { stem, blocks, transitions, bn, dense })
            }
            Family::R2UNet | Family::UdNet => {
                let ch = &spec.channels;
                let levels = ch.len() - 1;
                let mut encoders = Vec::new();
                let mut cin = spec.in_channels;
                for (i, &c) in ch[..levels].iter().enumerate() {
                    encoders.push(RecurrentResidual::new(&mut init, &format!("enc{}", i + 1), cin, c, spec.t));
                    cin = c;
                }
                let bottleneck = RecurrentResidual::new(&mut init, "bottleneck", cin, ch[levels], spec.t);
                let decoders = (0..levels)
                    .rev()
                    .map(|i| RecurrentResidual::new(&mut init, &format!("dec{}", i + 1), ch[i] + ch[i + 1], ch[i], spec.t))
                    .collect();
                let head = init.conv("head", ch[0], 1, 1, true);
                Net::UNet(UNet { encoders, bottleneck, decoders, head })
            }
        };
        Ok(Model { spec: spec.clone(), params: init.params, net })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn head(&self) -> Head {
        self.spec.family.head()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn param_table(&self) -> Vec<ParamRow> {
        self.params
            .params()
            .map(|(name, t)| ParamRow { name: name.to_string(), shape: t.shape().to_vec(), count: t.numel() })
            .collect()
    }

    /// Every RCL unit in construction order.
    pub fn rcl_units(&self) -> Vec<&RclUnit> {
        match &self.net {
            Net::Dcrn(d) => d.blocks.iter().flat_map(|b| &b.layers).collect(),
            Net::UNet(u) => u
                .encoders
                .iter()
                .chain(std::iter::once(&u.bottleneck))
                .chain(&u.decoders)
                .flat_map(|r| [&r.rcl1, &r.rcl2])
                .collect(),
        }
    }

    /// Checks that `shape` is a valid `[N, C, H, W]` input for this model.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let [n, c, h, w] = shape else {
            return Err(Error::shape("model input", format!("expected [N,C,H,W], got {shape:?}")));
        };
        if *n == 0 || *c != self.spec.in_channels {
            return Err(Error::shape(
                "model input",
                format!("expected [N>0,{},H,W], got {shape:?}", self.spec.in_channels),
            ));
        }
        let d = self.spec.spatial_divisor();
        if *h == 0 || *w == 0 || h % d != 0 || w % d != 0 {
            return Err(Error::shape(
                "model input",
                format!("{} needs height and width divisible by {d}, got {h}x{w}", self.spec.family.name()),
            ));
        }
        Ok(())
    }

    /// Binds the parameters into `g` and runs the network on `x`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Forward> {
        let vars = self.params.bind(g);
        self.forward_bound(g, &vars, x, mode)
    }

    /// Runs the network with parameters already bound as `vars`
    /// (one per parameter, in store order).
    pub fn forward_bound(&self, g: &mut Graph<T>, vars: &[Var], x: Var, mode: Mode) -> Result<Forward> {
        self.check_input(g.shape(x))?;
        let padding = self.spec.padding;
        let mut cx = Ctx { g, vars, params: &self.params, mode, padding };
        match &self.net {
            Net::Dcrn(d) => {
                let mut h = d.stem.forward(&mut cx, x)?;
                for (i, block) in d.blocks.iter().enumerate() {
                    h = block.forward(&mut cx, h)?;
                    if let Some(tr) = d.transitions.get(i) {
                        h = tr.forward(&mut cx, h)?;
                    }
                }
                h = d.bn.forward(&mut cx, h)?;
                h = cx.g.relu(h)?;
                h = cx.g.global_avg_pool(h)?;
                let logits = d.dense.forward(&mut cx, h)?;
                Ok(Forward { logits, output: logits })
            }
            Net::UNet(u) => {
                let mut skips = Vec::with_capacity(u.encoders.len());
                let mut h = x;
                for enc in &u.encoders {
                    let s = enc.forward(&mut cx, h)?;
                    skips.push(s);
                    h = cx.g.max_pool2(s)?;
                }
                h = u.bottleneck.forward(&mut cx, h)?;
                for (dec, skip) in u.decoders.iter().zip(skips.iter().rev()) {
                    let up = cx.g.upsample2(h)?;
                    let cat = cx.g.concat_channels(*skip, up)?;
                    h = dec.forward(&mut cx, cat)?;
                }
                let logits = u.head.forward(&mut cx, h)?;
                let output = match self.spec.family {
                    Family::R2UNet => cx.g.sigmoid(logits)?,
                    _ => logits,
                };
                Ok(Forward { logits, output })
            }
        }
    }

    /// Folds the batch statistics recorded on `g` into the running estimates.
    pub fn apply_stat_updates(&mut self, g: &mut Graph<T>) {
        let updates = g.take_stat_updates();
        self.params.apply_stat_updates(&updates);
    }

    /// Eval-mode forward pass returning the head output.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone(), false);
        let out = self.forward(&mut g, xv, Mode::Eval)?;
        Ok(g.value(out.output).clone())
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.find(name)
    }
}

pub fn build_dcrn<T: Scalar>(num_classes: usize, in_channels: usize, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::dcrn(in_channels, num_classes), seed)
}

pub fn build_r2unet<T: Scalar>(in_channels: usize, t: usize, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::r2unet(in_channels).with_t(t), seed)
}

pub fn build_udnet<T: Scalar>(in_channels: usize, t: usize, seed: u64) -> Result<Model<T>> {
    Model::build(&ModelSpec::udnet(in_channels).with_t(t), seed)
}

/// Finite-difference check of a whole model on one `size`x`size` sample, in
/// 64-bit, with respect to every parameter tensor and the input. The checked
/// output is the pre-activation head: a saturated sigmoid would leave
/// gradients too small to score.
///
/// Batch norm runs in eval mode on running statistics warmed up by a few
/// train-mode passes. In train mode a conv bias feeding a batch norm has an
/// identically zero gradient, which a relative-error test cannot score.
pub fn grad_check_model(
    spec: &ModelSpec,
    size: usize,
    opts: &GradCheckOptions,
    fault: Option<Fault>,
) -> Result<GradCheckReport> {
    let mut model = Model::<f64>::build(spec, opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    for _ in 0..3 {
        let mut g = Graph::new();
        let x = g.input(random_tensor(&[2, spec.in_channels, size, size], &mut rng), false);
        model.forward(&mut g, x, Mode::Train)?;
        model.apply_stat_updates(&mut g);
    }
    let mut inputs: Vec<(String, Tensor<f64>)> =
        model.params().params().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let np = inputs.len();
    inputs.push(("input".to_string(), random_tensor(&[1, spec.in_channels, size, size], &mut rng)));
    grad_check(
        |g, v| {
            if let Some(f) = fault {
                g.inject_fault(f);
            }
            Ok(model.forward_bound(g, &v[..np], v[np], Mode::Eval)?.logits)
        },
        &inputs,
        opts,
    )
}

/// Dense-block hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcrcBlockSpec {
    pub layers_per_block: usize,
    pub growth_rate: usize,
    pub t: usize,
    pub input_channels: usize,
}

impl DcrcBlockSpec {
    pub fn output_channels(&self) -> usize {
        self.input_channels + self.layers_per_block * self.growth_rate
    }

    /// Input width seen by layer `l` (1-based).
    pub fn layer_input_channels(&self, l: usize) -> usize {
        self.input_channels + (l - 1) * self.growth_rate
    }
}

#[derive(Debug, Clone)]
enum BlockKind {
    Rcl(RclUnit),
    Dcrc(DcrcBlock),
    Transition(Transition),
}

/// A single building block with its own parameters, usable on its own.
#[derive(Debug, Clone)]
pub struct Block<T> {
    params: ParamStore<T>,
    kind: BlockKind,
    out_channels: usize,
}

impl<T: Scalar> Block<T> {
    pub fn rcl(cin: usize, cout: usize, t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { params: ParamStore::new(), rng: &mut rng };
        let unit = RclUnit::new(&mut init, "rcl", cin, cout, t);
        Block { params: init.params, kind: BlockKind::Rcl(unit), out_channels: cout }
    }

    pub fn dcrc(spec: DcrcBlockSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { params: ParamStore::new(), rng: &mut rng };
        let block =
            DcrcBlock::new(&mut init, "dcrc", spec.input_channels, spec.layers_per_block, spec.growth_rate, spec.t);
        Block { params: init.params, kind: BlockKind::Dcrc(block), out_channels: spec.output_channels() }
    }

    /// Transition to `cout` channels; `None` applies 0.5 compression.
    pub fn transition(cin: usize, cout: Option<usize>, seed: u64) -> Self {
        let cout = cout.unwrap_or(cin / 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init { params: ParamStore::new(), rng: &mut rng };
        let tr = Transition::new(&mut init, "transition", cin, cout);
        Block { params: init.params, kind: BlockKind::Transition(tr), out_channels: cout }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Changes the unfolding depth of every RCL unit, keeping the weights.
    pub fn set_t(&mut self, t: usize) {
        match &mut self.kind {
            BlockKind::Rcl(u) => u.t = t,
            BlockKind::Dcrc(b) => b.layers.iter_mut().for_each(|u| u.t = t),
            BlockKind::Transition(_) => {}
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Var> {
        let vars = self.params.bind(g);
        let mut cx = Ctx { g, vars: &vars, params: &self.params, mode, padding: Padding::Same };
        match &self.kind {
            BlockKind::Rcl(u) => u.forward(&mut cx, x),
            BlockKind::Dcrc(b) => b.forward(&mut cx, x),
            BlockKind::Transition(tr) => tr.forward(&mut cx, x),
        }
    }

    /// Forward pass on a detached input, returning the output tensor.
    pub fn apply(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone(), false);
        let out = self.forward(&mut g, xv, mode)?;
        Ok(g.value(out).clone())
    }

    /// The feedforward path `relu(bn(conv_f(x)))` of an RCL block, computed
    /// with its own ops rather than through the unit.
    pub fn rcl_feedforward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let BlockKind::Rcl(u) = &self.kind else {
            return Err(Error::InvalidArgument("rcl_feedforward on a non-RCL block".into()));
        };
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g);
        let xv = g.input(x.clone(), false);
        let mut cx = Ctx { g: &mut g, vars: &vars, params: &self.params, mode, padding: Padding::Same };
        let ff = u.wf.forward(&mut cx, xv)?;
        let h = u.bn.forward(&mut cx, ff)?;
        let h = cx.g.relu(h)?;
        Ok(g.value(h).clone())
    }
}
