use crate::autograd::{Graph, Mode};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, binarize, confusion_metrics, detect_peaks, detection_f1, dice, mse_metric, pixel_accuracy, roc_auc,
    DetectionCounts, MetricsReport,
};
use crate::nn::Model;
use crate::tensor::Scalar;

use super::dataset::{Dataset, Targets, Task};

/// Post-processing settings for evaluation reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Foreground probability threshold for masks.
    pub threshold: f64,
    /// Detection match radius in pixels.
    pub match_radius: f64,
    /// Minimum (unscaled) density at a detected peak.
    pub peak_min_height: f64,
    pub peak_min_distance: f64,
    /// Relative count error tolerated by the `count_within` metric.
    pub count_tolerance: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { threshold: 0.5, match_radius: 6.0, peak_min_height: 0.01, peak_min_distance: 3.0, count_tolerance: 0.2 }
    }
}

/// Head outputs per sample, as flat `f64` vectors: class probabilities for
/// classifiers, foreground probabilities for masks, unscaled density for
/// detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub outputs: Vec<Vec<f64>>,
    /// Width and height of map outputs; zero for classifiers.
    pub width: usize,
    pub height: usize,
}

fn softmax_rows(logits: &[f64], k: usize) -> Vec<Vec<f64>> {
    logits
        .chunks(k)
        .map(|row| {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Splits a batch output tensor into per-sample head outputs.
pub(crate) fn split_outputs(task: Task, values: &[f64], n: usize, scale: f64) -> Vec<Vec<f64>> {
    let per = values.len() / n;
    match task {
        Task::Classify => softmax_rows(values, per),
        Task::Segment => values.chunks(per).map(<[f64]>::to_vec).collect(),
        Task::Detect => values.chunks(per).map(|c| c.iter().map(|v| v / scale).collect()).collect(),
    }
}

/// Batch size for eval-mode passes. Fixed so evaluation never depends on
/// the training batch size.
pub const EVAL_BATCH: usize = 8;

/// Checks that `data` suits `model`: task, input shape and density scale.
pub fn check_data<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<()> {
    let task = data.task();
    let spec = model.spec();
    if task.family() != spec.family {
        return Err(Error::Config(format!("task {task} cannot use a {} model", spec.family.name())));
    }
    if task == Task::Detect && data.density_scale() != f64::from(spec.density_scale) {
        return Err(Error::Config(format!(
            "density targets scaled by {} but the model expects {}",
            data.density_scale(),
            spec.density_scale
        )));
    }
    if let Some(x) = data.inputs.first() {
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        model.check_input(&shape)?;
    }
    Ok(())
}

/// Eval-mode predictions for every sample.
pub fn predict_dataset<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<Predictions> {
    check_data(model, data)?;
    let task = data.task();
    let scale = data.density_scale();
    let mut outputs = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let x = data.batch_inputs(chunk)?;
        let mut g = Graph::new();
        let xv = g.input(x, false);
        let fwd = model.forward(&mut g, xv, Mode::Eval)?;
        let vals = g.value(fwd.logits).to_f64_vec();
        let vals = if task == Task::Segment { g.value(fwd.output).to_f64_vec() } else { vals };
        outputs.extend(split_outputs(task, &vals, chunk.len(), scale));
    }
    let (width, height) = match data.inputs.first().map(|t| t.shape()) {
        Some([_, h, w]) if task != Task::Classify => (*w, *h),
        _ => (0, 0),
    };
    Ok(Predictions { outputs, width, height })
}

fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

/// The tracked metric for one sample: correctness, Dice, or density MSE.
pub(crate) fn sample_score<T: Scalar>(data: &Dataset<T>, i: usize, output: &[f64], threshold: f64) -> Result<f64> {
    match &data.targets {
        Targets::Classes(c) => Ok(f64::from(u8::from(argmax(output) == c[i]))),
        Targets::Masks(m) => dice(&binarize(output, threshold), &m[i].to_f64_vec()),
        Targets::Density { maps, scale, .. } => {
            let truth: Vec<f64> = maps[i].data().iter().map(|v| v.as_f64() / scale).collect();
            mse_metric(output, &truth)
        }
    }
}

/// Mean of the per-sample tracked metric.
pub fn task_metric<T: Scalar>(data: &Dataset<T>, preds: &Predictions, threshold: f64) -> Result<f64> {
    if preds.outputs.len() != data.len() || data.is_empty() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} samples", preds.outputs.len(), data.len())));
    }
    let mut total = 0.0;
    for (i, out) in preds.outputs.iter().enumerate() {
        total += sample_score(data, i, out, threshold)?;
    }
    Ok(total / data.len() as f64)
}

/// Peaks of each predicted density map.
pub fn detections(preds: &Predictions, opts: &EvalOptions) -> Result<Vec<Vec<(f64, f64)>>> {
    preds
        .outputs
        .iter()
        .map(|m| detect_peaks(m, preds.width, preds.height, opts.peak_min_height, opts.peak_min_distance))
        .collect()
}

/// Full metric set for `preds` against `data`.
pub fn evaluate_predictions<T: Scalar>(data: &Dataset<T>, preds: &Predictions, opts: &EvalOptions) -> Result<MetricsReport> {
    let mut r = MetricsReport::default();
    r.set("samples", data.len() as f64);
    r.set(data.task().metric_name(), task_metric(data, preds, opts.threshold)?);
    match &data.targets {
        Targets::Classes(truth) => {
            let pred: Vec<usize> = preds.outputs.iter().map(|p| argmax(p)).collect();
            r.set("accuracy", accuracy(&pred, truth)?);
            let k = preds.outputs.first().map_or(0, Vec::len);
            if k == 2 {
                let c = confusion_metrics(&pred, truth, 1)?;
                r.set("precision", c.precision());
                r.set("recall", c.recall());
                r.set("f1", c.f1());
                let labels: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
                let scores: Vec<f64> = preds.outputs.iter().map(|p| p[1]).collect();
                if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
                    let roc = roc_auc(&scores, &labels)?;
                    r.set("auc", roc.auc);
                    r.roc_points = roc.points;
                }
            } else {
                let mut f1 = 0.0;
                for class in 0..k {
                    f1 += confusion_metrics(&pred, truth, class)?.f1();
                }
                r.set("macro_f1", f1 / k as f64);
            }
        }
        Targets::Masks(masks) => {
            let (mut acc, mut inter, mut sizes) = (0.0, 0.0, 0.0);
            for (out, m) in preds.outputs.iter().zip(masks) {
                let truth = m.to_f64_vec();
                acc += pixel_accuracy(out, &truth, opts.threshold)?;
                let bin = binarize(out, opts.threshold);
                inter += bin.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>();
                sizes += bin.iter().sum::<f64>() + truth.iter().sum::<f64>();
            }
            r.set("pixel_accuracy", acc / masks.len() as f64);
            r.set("dice_pooled", if sizes == 0.0 { 1.0 } else { 2.0 * inter / sizes });
        }
        Targets::Density { dots, .. } => {
            let found = detections(preds, opts)?;
            let mut counts = DetectionCounts::default();
            let (mut abs_err, mut within) = (0.0, 0usize);
            for ((out, truth), pred) in preds.outputs.iter().zip(dots).zip(&found) {
                counts = counts.merge(detection_f1(pred, truth, opts.match_radius)?);
                let est: f64 = out.iter().sum();
                let n = truth.len() as f64;
                abs_err += (est - n).abs();
                if (est - n).abs() <= opts.count_tolerance * n {
                    within += 1;
                }
            }
            r.set("count_mae", abs_err / dots.len() as f64);
            r.set("count_within", within as f64 / dots.len() as f64);
            r.set("precision", counts.precision());
            r.set("recall", counts.recall());
            r.set("f1", counts.f1());
        }
    }
    Ok(r)
}

pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>, opts: &EvalOptions) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let preds = predict_dataset(model, data)?;
    evaluate_predictions(data, &preds, opts)
}
