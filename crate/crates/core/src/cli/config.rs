use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::autograd::Padding;
use crate::data::{SynthKind, SynthSpec, DEFAULT_ANGLES, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::nn::{Family, ModelSpec};
use crate::train::{check_compatible, EvalOptions, LossKind, OptimizerKind, Schedule, Task, TrainConfig};

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Manifest(PathBuf),
    Synthetic(SynthSpec),
}

impl DataSource {
    /// Input channels implied by a synthetic source.
    pub fn channels(&self) -> Option<usize> {
        match self {
            DataSource::Synthetic(s) if s.kind == SynthKind::Blobs => Some(3),
            DataSource::Synthetic(_) => Some(1),
            DataSource::Manifest(_) => None,
        }
    }
}

/// How the source is divided into training and test records when no
/// separate test source is configured.
#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    None,
    /// Training share, e.g. 0.8.
    Fraction(f64),
    /// Every record of this patient is held out.
    Patient(String),
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Split::None);
        }
        if let Some(f) = s.strip_prefix("fraction:") {
            let f: f64 = f.trim().parse().map_err(|_| Error::Config(format!("split fraction {f:?} is not a number")))?;
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("split fraction {f} outside (0, 1)")));
            }
            return Ok(Split::Fraction(f));
        }
        if let Some(p) = s.strip_prefix("patient:") {
            return Ok(Split::Patient(p.trim().to_string()));
        }
        Err(Error::Config(format!("unknown split {s:?} (none, fraction:<x>, patient:<id>)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub test: Option<DataSource>,
    pub split: Split,
    /// Seed for splitting and balancing.
    pub seed: u64,
    pub patch: Option<usize>,
    pub resize: Option<(usize, usize)>,
    pub augment: bool,
    pub angles: Vec<f64>,
    /// Keep at most this many training samples per class.
    pub balance: Option<usize>,
    pub sigma: f64,
}

/// A parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    /// Model architecture. `in_channels` is only provisional when
    /// `in_channels_given` is false; it is then taken from the data.
    pub model: ModelSpec,
    pub in_channels_given: bool,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    /// Metric keys written to `metrics.txt`; empty means all.
    pub metrics: Vec<String>,
    pub roc_csv: bool,
    pub output_dir: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "task",
    "output.dir",
    "model.family",
    "model.t",
    "model.blocks",
    "model.layers",
    "model.growth",
    "model.stem",
    "model.channels",
    "model.classes",
    "model.in_channels",
    "model.padding",
    "model.density_scale",
    "data.manifest",
    "data.synthetic",
    "data.n",
    "data.size",
    "data.seed",
    "data.classes",
    "data.patients",
    "data.test_manifest",
    "data.test_n",
    "data.test_seed",
    "data.split",
    "data.split_seed",
    "data.patch",
    "data.resize",
    "data.augment",
    "data.angles",
    "data.balance",
    "data.sigma",
    "train.optimizer",
    "train.lr",
    "train.momentum",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.schedule",
    "train.decay_period",
    "train.decay_factor",
    "train.batch_size",
    "train.epochs",
    "train.loss",
    "train.seed",
    "train.val_fraction",
    "eval.threshold",
    "eval.match_radius",
    "eval.peak_min_height",
    "eval.peak_min_distance",
    "eval.count_tolerance",
    "eval.metrics",
    "eval.roc_csv",
];

/// Raw `key = value` pairs with the line each came from.
struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {line:?}", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key {k:?}", i + 1)));
            }
            if let Some((first, _)) = map.insert(k.to_string(), (i + 1, v.to_string())) {
                return Err(Error::Config(format!("line {}: {k} already set on line {first}", i + 1)));
            }
        }
        Ok(Entries { map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| Error::Config(format!("line {line}: {key} = {v:?}: {e}"))),
        }
    }

    fn or<V: FromStr>(&self, key: &str, default: V) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        let Some((line, v)) = self.map.get(key) else { return Ok(None) };
        v.split(',')
            .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("line {line}: {key}: bad item {p:?}"))))
            .collect::<Result<_>>()
            .map(Some)
    }
}

fn parse_padding(s: &str) -> Result<Padding> {
    match s {
        "same" => Ok(Padding::Same),
        "circular" => Ok(Padding::Circular),
        "valid" => Ok(Padding::Valid),
        _ => Err(Error::Config(format!("unknown padding {s:?}"))),
    }
}

fn parse_resize(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("data.resize = {s:?} is not N or WxH"));
    match s.split_once('x') {
        Some((w, h)) => Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?)),
        None => {
            let n = s.parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

fn synth_source(e: &Entries, kind: SynthKind, n_key: &str, seed_key: &str, seed_default: u64) -> Result<DataSource> {
    let mut spec = SynthSpec::new(
        kind,
        e.get(n_key)?.ok_or_else(|| Error::Config(format!("synthetic data needs {n_key}")))?,
        e.or("data.size", 64)?,
        e.or(seed_key, seed_default)?,
    );
    spec.classes = e.or("data.classes", spec.classes)?;
    spec.patients = e.or("data.patients", spec.patients)?;
    Ok(DataSource::Synthetic(spec))
}

impl RunConfig {
    /// Parses config text. Relative manifest paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let e = Entries::parse(text)?;
        let task: Task = e.get("task")?.ok_or_else(|| Error::Config("missing task".into()))?;

        let family: Family = e.or("model.family", task.family())?;
        if family != task.family() {
            return Err(Error::Config(format!(
                "task {task} needs a {} model, config has model.family = {}",
                task.family().name(),
                family.name()
            )));
        }

        let source = match (e.raw("data.manifest"), e.raw("data.synthetic")) {
            (Some(_), Some(_)) => return Err(Error::Config("set data.manifest or data.synthetic, not both".into())),
            (Some(m), None) => DataSource::Manifest(base.join(m)),
            (None, Some(k)) => synth_source(&e, k.parse()?, "data.n", "data.seed", 0)?,
            (None, None) => return Err(Error::Config("missing data.manifest or data.synthetic".into())),
        };
        let test = match (e.raw("data.test_manifest"), e.raw("data.test_n")) {
            (Some(_), Some(_)) => return Err(Error::Config("set data.test_manifest or data.test_n, not both".into())),
            (Some(m), None) => Some(DataSource::Manifest(base.join(m))),
            (None, Some(_)) => match &source {
                DataSource::Synthetic(s) => {
                    Some(synth_source(&e, s.kind, "data.test_n", "data.test_seed", s.seed.wrapping_add(1))?)
                }
                DataSource::Manifest(_) => {
                    return Err(Error::Config("data.test_n needs a synthetic source".into()));
                }
            },
            (None, None) => None,
        };
        let split: Split = e.or("data.split", Split::None)?;
        if test.is_some() && split != Split::None {
            return Err(Error::Config("data.split cannot be combined with a separate test set".into()));
        }
        for src in std::iter::once(&source).chain(&test) {
            if let DataSource::Manifest(p) = src {
                if !p.is_file() {
                    return Err(Error::Config(format!("manifest {} does not exist", p.display())));
                }
            }
        }
        let data = DataConfig {
            seed: e.or("data.split_seed", 0)?,
            patch: e.get("data.patch")?,
            resize: e.raw("data.resize").map(parse_resize).transpose()?,
            augment: e.or("data.augment", false)?,
            angles: e.list("data.angles")?.unwrap_or_else(|| DEFAULT_ANGLES.to_vec()),
            balance: e.get("data.balance")?,
            sigma: e.or("data.sigma", DEFAULT_SIGMA)?,
            source,
            test,
            split,
        };
        if data.patch == Some(0) || data.resize.is_some_and(|(w, h)| w == 0 || h == 0) {
            return Err(Error::Config("patch and resize sizes must be positive".into()));
        }
        if !(data.sigma > 0.0) {
            return Err(Error::Config(format!("data.sigma must be positive, got {}", data.sigma)));
        }
        if data.balance.is_some() && task != Task::Classify {
            return Err(Error::Config("data.balance needs class targets".into()));
        }

        let default_classes = match &data.source {
            DataSource::Synthetic(s) if s.kind == SynthKind::Blobs => s.classes,
            _ => 2,
        };
        let in_channels: Option<usize> = e.get("model.in_channels")?;
        let mut model = ModelSpec::for_family(
            family,
            in_channels.or(data.source.channels()).unwrap_or(1),
            if family == Family::Dcrn { e.or("model.classes", default_classes)? } else { 1 },
        );
        model.t = e.or("model.t", model.t)?;
        model.blocks = e.or("model.blocks", model.blocks)?;
        model.layers = e.or("model.layers", model.layers)?;
        model.growth = e.or("model.growth", model.growth)?;
        model.stem_channels = e.or("model.stem", model.stem_channels)?;
        model.channels = e.list("model.channels")?.unwrap_or(model.channels);
        model.density_scale = e.or("model.density_scale", 1)?;
        if let Some(p) = e.raw("model.padding") {
            model.padding = parse_padding(p)?;
        }
        model.validate()?;

        let optimizer = match e.raw("train.optimizer").unwrap_or("adam") {
            "sgd" => OptimizerKind::Sgd { momentum: e.or("train.momentum", 0.9)? },
            "adam" => {
                let OptimizerKind::Adam { beta1, beta2, eps } = OptimizerKind::adam() else { unreachable!() };
                OptimizerKind::Adam {
                    beta1: e.or("train.beta1", beta1)?,
                    beta2: e.or("train.beta2", beta2)?,
                    eps: e.or("train.eps", eps)?,
                }
            }
            other => return Err(Error::Config(format!("unknown optimizer {other:?} (sgd, adam)"))),
        };
        let schedule = match e.raw("train.schedule").unwrap_or("constant") {
            "constant" => Schedule::Constant,
            "step" | "step_decay" => Schedule::StepDecay {
                period: e.or("train.decay_period", 20)?,
                factor: e.or("train.decay_factor", 10.0)?,
            },
            other => return Err(Error::Config(format!("unknown schedule {other:?} (constant, step)"))),
        };
        let default_loss = if task == Task::Detect { LossKind::Mse } else { LossKind::CrossEntropy };
        let eval_defaults = EvalOptions::default();
        let eval = EvalOptions {
            threshold: e.or("eval.threshold", eval_defaults.threshold)?,
            match_radius: e.or("eval.match_radius", eval_defaults.match_radius)?,
            peak_min_height: e.or("eval.peak_min_height", eval_defaults.peak_min_height)?,
            peak_min_distance: e.or("eval.peak_min_distance", eval_defaults.peak_min_distance)?,
            count_tolerance: e.or("eval.count_tolerance", eval_defaults.count_tolerance)?,
        };
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            optimizer,
            lr: e.or("train.lr", defaults.lr)?,
            schedule,
            batch_size: e.or("train.batch_size", defaults.batch_size)?,
            epochs: e.or("train.epochs", defaults.epochs)?,
            loss: e.or("train.loss", default_loss)?,
            seed: e.or("train.seed", defaults.seed)?,
            threshold: eval.threshold,
            val_fraction: e.or("train.val_fraction", defaults.val_fraction)?,
        };
        train.validate()?;
        check_compatible(task, family.head(), train.loss)?;

        let metrics = match e.raw("eval.metrics") {
            None | Some("all") => Vec::new(),
            Some(_) => e.list("eval.metrics")?.unwrap_or_default(),
        };
        Ok(RunConfig {
            task,
            model,
            in_channels_given: in_channels.is_some(),
            data,
            train,
            eval,
            metrics,
            roc_csv: e.or("eval.roc_csv", false)?,
            output_dir: e.raw("output.dir").map(PathBuf::from),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}
