//! Evaluation metrics: confusion counts, ROC AUC, Dice, pixel accuracy,
//! MSE and dot detection. Every function is pure.

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("{what}: {a} predictions for {b} targets")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// One-vs-rest counts for `positive`.
pub fn confusion_metrics(pred: &[usize], truth: &[usize], positive: usize) -> Result<ConfusionCounts> {
    same_len("confusion_metrics", pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument("confusion_metrics of no items".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Fraction of exact label matches over any number of classes.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    same_len("accuracy", pred.len(), truth.len())?;
    Ok(ratio(pred.iter().zip(truth).filter(|(p, t)| p == t).count() as u64, pred.len() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

/// Rank-statistic AUC (ties count one half) and the empirical ROC curve at
/// every distinct score.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Roc> {
    same_len("roc_auc", scores.len(), labels.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("roc_auc scores".into()));
    }
    let p = labels.iter().filter(|&&l| l).count() as u64;
    let n = labels.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument("roc_auc needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // Descending sweep: each positive outranks the negatives not yet seen.
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut twice_correct: u128 = 0;
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        let neg_below = n - fp - gn;
        twice_correct += 2 * u128::from(gp) * u128::from(neg_below) + u128::from(gp) * u128::from(gn);
        tp += gp;
        fp += gn;
        points.push(RocPoint { threshold: s, fpr: ratio(fp, n), tpr: ratio(tp, p) });
    }
    let auc = twice_correct as f64 / (2 * u128::from(p) * u128::from(n)) as f64;
    Ok(Roc { auc, points })
}

pub fn write_roc_csv(path: impl AsRef<Path>, points: &[RocPoint]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("threshold,fpr,tpr\n");
    for pt in points {
        let _ = writeln!(text, "{},{},{}", pt.threshold, pt.fpr, pt.tpr);
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_binary(what: &str, v: &[f64]) -> Result<()> {
    match v.iter().find(|&&x| x != 0.0 && x != 1.0) {
        Some(x) => Err(Error::InvalidArgument(format!("{what}: mask value {x} is not 0 or 1"))),
        None => Ok(()),
    }
}

/// `2|A∩B| / (|A| + |B|)` for binary masks; two empty masks score 1.
pub fn dice(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len("dice", pred.len(), truth.len())?;
    check_binary("dice", pred)?;
    check_binary("dice", truth)?;
    let a = pred.iter().filter(|&&v| v == 1.0).count() as u64;
    let b = truth.iter().filter(|&&v| v == 1.0).count() as u64;
    if a + b == 0 {
        return Ok(1.0);
    }
    let both = pred.iter().zip(truth).filter(|(p, t)| **p == 1.0 && **t == 1.0).count() as u64;
    Ok(ratio(2 * both, a + b))
}

/// Thresholds `values` into a 0/1 mask (`>= threshold` is foreground).
pub fn binarize(values: &[f64], threshold: f64) -> Vec<f64> {
    values.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect()
}

/// Fraction of pixels whose thresholded prediction equals the truth
/// (also thresholded, so soft targets are accepted).
pub fn pixel_accuracy(pred: &[f64], truth: &[f64], threshold: f64) -> Result<f64> {
    same_len("pixel_accuracy", pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| (**p >= threshold) == (**t >= threshold)).count();
    Ok(ratio(hits as u64, pred.len() as u64))
}

pub fn mse_metric(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len("mse_metric", pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse_metric of empty maps".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Local maxima (over the 8-neighbourhood) of a row-major `width` x `height`
/// map that reach `min_height`, kept greedily from the highest down unless
/// within `min_distance` of an already kept peak. Equal heights are taken in
/// row-major order. Returns `(x, y)` pixel coordinates.
pub fn detect_peaks(map: &[f64], width: usize, height: usize, min_height: f64, min_distance: f64) -> Result<Vec<(f64, f64)>> {
    if map.len() != width * height {
        return Err(Error::InvalidArgument(format!("{} values for a {width}x{height} map", map.len())));
    }
    if !(min_distance >= 1.0) {
        return Err(Error::InvalidArgument(format!("min_distance must be at least 1, got {min_distance}")));
    }
    let mut cands = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let v = map[y * width + x];
            if v < min_height {
                continue;
            }
            let mut is_max = true;
            for ny in y.saturating_sub(1)..(y + 2).min(height) {
                for nx in x.saturating_sub(1)..(x + 2).min(width) {
                    if map[ny * width + nx] > v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                cands.push((v, y * width + x));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for (_, i) in cands {
        let (x, y) = ((i % width) as f64, (i / width) as f64);
        if peaks.iter().all(|&(px, py)| (px - x).hypot(py - y) > min_distance) {
            peaks.push((x, y));
        }
    }
    Ok(peaks)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl DetectionCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn merge(self, other: DetectionCounts) -> DetectionCounts {
        DetectionCounts { tp: self.tp + other.tp, fp: self.fp + other.fp, fn_: self.fn_ + other.fn_ }
    }
}

/// One-to-one greedy matching in order of increasing distance; pairs farther
/// apart than `radius` never match.
pub fn detection_f1(pred: &[(f64, f64)], truth: &[(f64, f64)], radius: f64) -> Result<DetectionCounts> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("match radius must be positive, got {radius}")));
    }
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let d = (p.0 - t.0).hypot(p.1 - t.1);
            if d <= radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_p, mut used_t) = (vec![false; pred.len()], vec![false; truth.len()]);
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            tp += 1;
        }
    }
    Ok(DetectionCounts { tp, fp: pred.len() as u64 - tp, fn_: truth.len() as u64 - tp })
}

/// Named scalar results, rendered as sorted `key = value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub values: BTreeMap<String, f64>,
    pub roc_points: Vec<RocPoint>,
}

impl MetricsReport {
    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.values.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
