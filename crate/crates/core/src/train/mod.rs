//! Optimizers, learning-rate schedules, the epoch loop, evaluation and
//! checkpoints.

mod checkpoint;
mod dataset;
mod eval;
mod optim;

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use dataset::{Dataset, TargetOptions, Targets, Task};
pub use eval::{
    check_data, detections, evaluate, evaluate_predictions, predict_dataset, task_metric, EvalOptions, Predictions,
    EVAL_BATCH,
};
pub use optim::{adam_step, sgd_step, step_decay, OptimizerKind, OptimizerState, Schedule};

use crate::autograd::{Graph, Mode};
use crate::data::split_fraction_indices;
use crate::error::{Error, Result};
use crate::nn::{Head, Model};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" | "cross_entropy" => Ok(LossKind::CrossEntropy),
            "mse" => Ok(LossKind::Mse),
            _ => Err(Error::Config(format!("unknown loss {s:?} (ce, mse)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Mask threshold used by the segmentation training metric.
    pub threshold: f64,
    /// Share of the training set held out for validation when no eval set
    /// is given; 0 disables the split.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::adam(),
            lr: 1e-3,
            schedule: Schedule::Constant,
            batch_size: 8,
            epochs: 10,
            loss: LossKind::CrossEntropy,
            seed: 0,
            threshold: 0.5,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("validation fraction {} outside [0, 1)", self.val_fraction)));
        }
        if let Schedule::StepDecay { period, factor } = self.schedule {
            if period == 0 || !(factor > 0.0) {
                return Err(Error::Config("step decay needs period >= 1 and a positive factor".into()));
            }
        }
        Ok(())
    }
}

/// Checks that a head and loss fit together for `task`.
pub fn check_compatible(task: Task, head: Head, loss: LossKind) -> Result<()> {
    let ok = matches!(
        (task, head, loss),
        (Task::Classify, Head::Softmax, LossKind::CrossEntropy)
            | (Task::Segment, Head::SigmoidMask, _)
            | (Task::Detect, Head::LinearDensity, LossKind::Mse)
    );
    if !ok {
        return Err(Error::Config(format!("task {task} is incompatible with a {head:?} head and {loss:?} loss")));
    }
    Ok(())
}

/// Everything besides the model that a resumed run needs.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub optimizer: OptimizerState<T>,
    pub rng: ChaCha8Rng,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &TrainConfig, model: &Model<T>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        TrainState { optimizer: OptimizerState::new(cfg.optimizer, model.params()), rng, epoch: 0 }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// One-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_metric: f64,
    pub val_metric: Option<f64>,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,lr,train_loss,train_metric,val_metric\n");
    for h in history {
        let val = h.val_metric.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{}", h.epoch, h.lr, h.train_loss, h.train_metric, val);
    }
    s
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochStats]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

fn diverged(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(detail) => Error::Diverged { epoch, batch, detail },
        other => other,
    }
}

/// Forward, backward and update on one batch; returns the loss and the
/// per-sample outputs.
fn train_batch<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset<T>,
    idx: &[usize],
    cfg: &TrainConfig,
    state: &mut TrainState<T>,
    lr: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let task = data.task();
    let mut g = Graph::new();
    let x = g.input(data.batch_inputs(idx)?, false);
    let fwd = model.forward(&mut g, x, Mode::Train)?;
    let loss = match data.batch_maps(idx)? {
        None => {
            let labels = data.labels().expect("class targets");
            let batch: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            g.softmax_cross_entropy(fwd.logits, &batch)?
        }
        Some(target) => {
            let t = g.input(target, false);
            match cfg.loss {
                LossKind::CrossEntropy => g.sigmoid_bce(fwd.logits, t)?,
                LossKind::Mse => g.mse_loss(fwd.output, t)?,
            }
        }
    };
    let loss_value = g.value(loss).data()[0].as_f64();
    let out = if task == Task::Segment { fwd.output } else { fwd.logits };
    let outputs = eval::split_outputs(task, &g.value(out).to_f64_vec(), idx.len(), data.density_scale());
    g.backward(loss)?;
    let params = model.params_mut();
    params.zero_grads();
    params.accumulate_grads(&g);
    model.apply_stat_updates(&mut g);
    state.optimizer.step(cfg.optimizer, model.params_mut(), lr)?;
    if let Some((name, _)) = model.params().params().find(|(_, t)| !t.is_finite()) {
        return Err(Error::NonFinite(format!("update of {name}")));
    }
    Ok((loss_value, outputs))
}

/// Trains from `state.epoch` up to `cfg.epochs`, shuffling with the state's
/// RNG each epoch. Without `val`, a seeded `cfg.val_fraction` of `train` is
/// held out instead. The final short batch is kept. `on_epoch` runs after each
/// epoch and may stop training early by returning `Break`.
pub fn train_loop<T: Scalar>(
    model: &mut Model<T>,
    train: &Dataset<T>,
    val: Option<&Dataset<T>>,
    cfg: &TrainConfig,
    state: &mut TrainState<T>,
    mut on_epoch: impl FnMut(&EpochStats, &Model<T>) -> ControlFlow<()>,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let task = train.task();
    check_compatible(task, model.head(), cfg.loss)?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_data(model, train)?;
    if let Some(v) = val {
        check_data(model, v)?;
    }
    let held_out;
    let (train, val) = match val {
        None if cfg.val_fraction > 0.0 && train.len() >= 2 => {
            let (tr, va) = split_fraction_indices(train.len(), train.labels(), 1.0 - cfg.val_fraction, cfg.seed)?;
            held_out = (train.subset(&tr), train.subset(&va));
            (&held_out.0, Some(&held_out.1))
        }
        _ => (train, val),
    };
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut history = Vec::new();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch + 1;
        let lr = cfg.schedule.lr(cfg.lr, state.epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut state.rng);
        let (mut loss_sum, mut score_sum) = (0.0, 0.0);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, outputs) =
                train_batch(model, train, idx, cfg, state, lr).map_err(|e| diverged(epoch, b + 1, e))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b + 1, detail: format!("loss {loss}") });
            }
            loss_sum += loss * idx.len() as f64;
            for (&i, out) in idx.iter().zip(&outputs) {
                score_sum += eval::sample_score(train, i, out, cfg.threshold)?;
            }
        }
        let val_metric = match val {
            Some(v) if !v.is_empty() => {
                let preds = predict_dataset(model, v).map_err(|e| diverged(epoch, 0, e))?;
                Some(task_metric(v, &preds, cfg.threshold)?)
            }
            _ => None,
        };
        state.epoch = epoch;
        let stats = EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_metric: score_sum / train.len() as f64,
            val_metric,
        };
        log::info!(
            "epoch {epoch} lr {lr:.3e} loss {:.6} {} {:.4e}{}",
            stats.train_loss,
            task.metric_name(),
            stats.train_metric,
            val_metric.map(|v| format!(" val {v:.4e}")).unwrap_or_default()
        );
        history.push(stats);
        if on_epoch(&stats, model).is_break() {
            break;
        }
    }
    Ok(history)
}
