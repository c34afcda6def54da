use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SampleRecord;
use crate::error::{Error, Result};

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Indices of at most `per_class` items per label, drawn uniformly without
/// replacement and returned in ascending order.
pub fn balance_indices(labels: &[usize], per_class: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (label, members) in by_class(labels) {
        if members.len() <= per_class {
            if members.len() < per_class {
                log::warn!("class {label} has {} samples, fewer than {per_class}; keeping all", members.len());
            }
            keep.extend(members);
        } else {
            keep.extend(sample(&mut rng, members.len(), per_class).into_iter().map(|i| members[i]));
        }
    }
    keep.sort_unstable();
    keep
}

fn labels_of(records: &[SampleRecord]) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| r.class().ok_or_else(|| Error::InvalidArgument(format!("{} has no class label", r.source_path))))
        .collect()
}

pub fn balance_classes(records: &[SampleRecord], per_class: usize, seed: u64) -> Result<Vec<SampleRecord>> {
    let labels = labels_of(records)?;
    Ok(balance_indices(&labels, per_class, seed).into_iter().map(|i| records[i].clone()).collect())
}

/// Holds out every record of `patient`.
pub fn split_one_patient_out(records: &[SampleRecord], patient: &str) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    if !records.iter().any(|r| r.patient_id == patient) {
        return Err(Error::InvalidArgument(format!("unknown patient id {patient:?}")));
    }
    let (test, train): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| r.patient_id == patient);
    if train.is_empty() {
        log::warn!("patient {patient:?} holds every record; training split is empty");
    }
    Ok((train, test))
}

/// Seeded split of `0..n` into `round(n * frac)` training indices and the
/// rest, optionally per label. Both halves are in ascending order.
pub fn split_fraction_indices(
    n: usize,
    labels: Option<&[usize]>,
    frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {frac} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match labels {
        Some(l) => {
            if l.len() != n {
                return Err(Error::InvalidArgument(format!("{} labels for {n} items", l.len())));
            }
            by_class(l).into_values().collect()
        }
        None => vec![(0..n).collect()],
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let k = (g.len() as f64 * frac).round() as usize;
        train.extend_from_slice(&g[..k]);
        test.extend_from_slice(&g[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_fraction(
    records: &[SampleRecord],
    train_frac: f64,
    seed: u64,
    stratify_by_class: bool,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let labels = if stratify_by_class { Some(labels_of(records)?) } else { None };
    let (tr, te) = split_fraction_indices(records.len(), labels.as_deref(), train_frac, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| records[i].clone()).collect();
    Ok((pick(tr), pick(te)))
}
