use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use crate::autograd::gradcheck::{GradCheckOptions, GradCheckReport};
use crate::autograd::Fault;
use crate::data::{
    balance_classes, extract_patches, gen_synthetic, load_manifest, resize_record, rotate_augment, split_fraction,
    split_one_patient_out, write_dataset, SampleRecord, SynthSpec,
};
use crate::error::{Error, Result};
use crate::metrics::{write_roc_csv, MetricsReport};
use crate::nn::{grad_check_model, Family, Model, ModelSpec};
use crate::tensor::Scalar;
use crate::train::{
    evaluate, evaluate_predictions, load_checkpoint, predict_dataset, save_checkpoint, train_loop, write_history,
    Dataset, EpochStats, EvalOptions, TargetOptions, Targets, Task, TrainState,
};

use super::config::{DataSource, RunConfig, Split};
use super::Precision;

pub fn load_source(src: &DataSource) -> Result<Vec<SampleRecord>> {
    match src {
        DataSource::Manifest(p) => load_manifest(p),
        DataSource::Synthetic(spec) => gen_synthetic(spec),
    }
}

/// Resizes, then tiles into patches, each step only when requested.
pub fn preprocess(
    records: Vec<SampleRecord>,
    resize: Option<(usize, usize)>,
    patch: Option<usize>,
) -> Result<Vec<SampleRecord>> {
    let records = match resize {
        Some((w, h)) => records.iter().map(|r| resize_record(r, w, h)).collect::<Result<_>>()?,
        None => records,
    };
    match patch {
        Some(p) => Ok(records.iter().map(|r| extract_patches(r, p)).collect::<Result<Vec<_>>>()?.concat()),
        None => Ok(records),
    }
}

/// Training and (optional) test records after every configured
/// pipeline stage. Balancing and augmentation touch the training side only.
pub fn prepare_data(cfg: &RunConfig) -> Result<(Vec<SampleRecord>, Option<Vec<SampleRecord>>)> {
    let d = &cfg.data;
    let all = preprocess(load_source(&d.source)?, d.resize, d.patch)?;
    let (mut train, test) = match (&d.test, &d.split) {
        (Some(t), _) => (all, Some(preprocess(load_source(t)?, d.resize, d.patch)?)),
        (None, Split::None) => (all, None),
        (None, Split::Fraction(f)) => {
            let (tr, te) = split_fraction(&all, *f, d.seed, cfg.task == Task::Classify)?;
            (tr, Some(te))
        }
        (None, Split::Patient(p)) => {
            let (tr, te) = split_one_patient_out(&all, p)?;
            (tr, Some(te))
        }
    };
    if let Some(per_class) = d.balance {
        train = balance_classes(&train, per_class, d.seed)?;
    }
    if d.augment {
        train = train.iter().map(|r| rotate_augment(r, &d.angles)).collect::<Result<Vec<_>>>()?.concat();
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Overrides `train.seed`.
    pub seed: Option<u64>,
    /// Overrides `train.epochs`.
    pub epochs: Option<usize>,
    pub precision: Precision,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub out_dir: PathBuf,
    pub history: Vec<EpochStats>,
    /// Test metrics plus the same keys prefixed `train_` for the training set.
    pub metrics: MetricsReport,
}

/// Runs the data pipeline, trains, evaluates and writes `model.dpnc`,
/// `history.csv` and `metrics.txt` into the output directory.
pub fn cmd_train(config: impl AsRef<Path>, opts: &TrainOptions) -> Result<TrainRun> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = opts.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = opts.epochs {
        cfg.train.epochs = epochs;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: set output.dir or pass --out".into()))?;
    match opts.precision {
        Precision::F32 => train_with::<f32>(&cfg, &out, opts.resume.as_deref()),
        Precision::F64 => train_with::<f64>(&cfg, &out, opts.resume.as_deref()),
    }
}

fn keep_metrics(report: MetricsReport, keys: &[String]) -> MetricsReport {
    if keys.is_empty() {
        return report;
    }
    let values = report.values.into_iter().filter(|(k, _)| keys.contains(k)).collect();
    MetricsReport { values, roc_points: report.roc_points }
}

fn train_with<T: Scalar>(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainRun> {
    let (train_records, test_records) = prepare_data(cfg)?;
    let mut spec = cfg.model.clone();
    if !cfg.in_channels_given {
        if let Some(r) = train_records.first() {
            spec.in_channels = r.image.channels();
        }
    }
    spec.validate()?;
    let opts = TargetOptions::for_spec(&spec, cfg.data.sigma);
    let train = Dataset::<T>::from_records(&train_records, cfg.task, opts)?;
    let test = test_records.map(|r| Dataset::<T>::from_records(&r, cfg.task, opts)).transpose()?;

    let (mut model, mut state) = match resume {
        Some(path) => {
            let (model, state) = load_checkpoint::<T>(path)?;
            let state = state.ok_or_else(|| {
                Error::Config(format!("{} holds no training state and cannot be resumed", path.display()))
            })?;
            if *model.spec() != spec {
                return Err(Error::Config(format!(
                    "checkpoint model {} differs from the configured {spec}",
                    model.spec()
                )));
            }
            (model, state)
        }
        None => {
            let model = Model::<T>::build(&spec, cfg.train.seed)?;
            let state = TrainState::new(&cfg.train, &model);
            (model, state)
        }
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let history = train_loop(&mut model, &train, test.as_ref(), &cfg.train, &mut state, |_, _| ControlFlow::Continue(()))?;
    save_checkpoint(out.join("model.dpnc"), &model, Some(&state))?;
    write_history(out.join("history.csv"), &history)?;

    let mut metrics = MetricsReport::default();
    if let Some(test) = &test {
        if !test.is_empty() {
            metrics = keep_metrics(evaluate(&model, test, &cfg.eval)?, &cfg.metrics);
        }
    }
    let on_train = keep_metrics(evaluate(&model, &train, &cfg.eval)?, &cfg.metrics);
    for (k, v) in &on_train.values {
        metrics.set(format!("train_{k}"), *v);
    }
    if cfg.roc_csv && !metrics.roc_points.is_empty() {
        write_roc_csv(out.join("roc.csv"), &metrics.roc_points)?;
    }
    metrics.write(out.join("metrics.txt"))?;
    Ok(TrainRun { out_dir: out.to_path_buf(), history, metrics })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub data: DataSource,
    pub resize: Option<(usize, usize)>,
    pub patch: Option<usize>,
    pub sigma: f64,
    pub opts: EvalOptions,
    pub roc_csv: Option<PathBuf>,
    /// Where to write the metrics text.
    pub out: Option<PathBuf>,
    /// Where to write per-image counts for detection models.
    pub counts_csv: Option<PathBuf>,
}

/// Per-image density count against the annotation count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRow {
    pub truth: usize,
    pub predicted: f64,
}

impl CountRow {
    pub fn error(&self) -> f64 {
        self.predicted - self.truth as f64
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub task: Task,
    pub metrics: MetricsReport,
    /// Filled for detection models only.
    pub counts: Vec<CountRow>,
}

/// Eval-mode metrics of a checkpoint on a manifest or synthetic set.
pub fn cmd_eval(args: &EvalArgs, precision: Precision) -> Result<EvalRun> {
    match precision {
        Precision::F32 => eval_with::<f32>(args),
        Precision::F64 => eval_with::<f64>(args),
    }
}

fn eval_with<T: Scalar>(args: &EvalArgs) -> Result<EvalRun> {
    let (model, _) = load_checkpoint::<T>(&args.checkpoint)?;
    let task = Task::for_family(model.spec().family);
    let records = preprocess(load_source(&args.data)?, args.resize, args.patch)?;
    let data = Dataset::<T>::from_records(&records, task, TargetOptions::for_spec(model.spec(), args.sigma))?;
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let preds = predict_dataset(&model, &data)?;
    let metrics = evaluate_predictions(&data, &preds, &args.opts)?;
    let counts = match &data.targets {
        Targets::Density { dots, .. } => preds
            .outputs
            .iter()
            .zip(dots)
            .map(|(m, d)| CountRow { truth: d.len(), predicted: m.iter().sum() })
            .collect(),
        _ => Vec::new(),
    };
    if let Some(p) = &args.roc_csv {
        if metrics.roc_points.is_empty() {
            return Err(Error::Config("ROC points exist only for binary classifiers with both classes present".into()));
        }
        write_roc_csv(p, &metrics.roc_points)?;
    }
    if let Some(p) = &args.out {
        metrics.write(p)?;
    }
    if let Some(p) = &args.counts_csv {
        fs::write(p, counts_csv(&counts)).map_err(|e| Error::io(p, e))?;
    }
    Ok(EvalRun { task, metrics, counts })
}

pub fn counts_csv(rows: &[CountRow]) -> String {
    let mut s = String::from("image,true_count,predicted_count,error\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", r.truth, r.predicted, r.error());
    }
    s
}

/// Writes the grid patches of every manifest row under `out`; returns the
/// new manifest path and the patch count.
pub fn cmd_patches(input: impl AsRef<Path>, size: usize, out: impl AsRef<Path>) -> Result<(PathBuf, usize)> {
    let records = preprocess(load_manifest(input)?, None, Some(size))?;
    let manifest = write_dataset(&records, out)?;
    Ok((manifest, records.len()))
}

pub fn cmd_synth(spec: &SynthSpec, out: impl AsRef<Path>) -> Result<PathBuf> {
    write_dataset(&gen_synthetic(spec)?, out)
}

#[derive(Debug, Clone)]
pub struct GradcheckArgs {
    pub family: Family,
    pub t: usize,
    pub size: usize,
    pub in_channels: Option<usize>,
    pub tolerance: f64,
    /// Entries checked per tensor; `None` checks every entry.
    pub sampled: Option<usize>,
    pub seed: u64,
    pub fault: Option<Fault>,
}

/// Finite-difference check of a freshly built model of `family`.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<GradCheckReport> {
    let channels = args.in_channels.unwrap_or(if args.family == Family::Dcrn { 3 } else { 1 });
    let spec = ModelSpec::for_family(args.family, channels, 2).with_t(args.t);
    let mut opts = GradCheckOptions::new(args.tolerance).seed(args.seed);
    if let Some(k) = args.sampled {
        opts = opts.sampled(k);
    }
    grad_check_model(&spec, args.size, &opts, args.fault)
}
