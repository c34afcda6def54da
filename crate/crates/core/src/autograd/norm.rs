use super::BnStats;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub(crate) struct BnForward<T> {
    pub output: Tensor<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    /// Per-channel batch mean and unbiased variance (train mode only).
    pub batch_stats: Option<(Vec<T>, Vec<T>)>,
}

fn channel_layout<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [n, c, h, w] => Ok((*n, *c, h * w)),
        [n, c] => Ok((*n, *c, 1)),
        s => Err(Error::shape("batch_norm", format!("expected [N,C,H,W] or [N,C], got {s:?}"))),
    }
}

pub(crate) fn batch_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    stats: &BnStats<'_, T>,
    epsilon: f64,
) -> Result<BnForward<T>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("batch_norm epsilon must be > 0, got {epsilon}")));
    }
    let (n, c, area) = channel_layout(x)?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "batch_norm",
            format!("gamma {:?} / beta {:?} for {c} channels", gamma.shape(), beta.shape()),
        ));
    }
    let eps = T::from_f64_lossy(epsilon);
    let count = n * area;
    let xd = x.data();
    let at = |s: usize, ch: usize| (s * c + ch) * area;

    let (mean, var, batch_stats) = match stats {
        BnStats::Eval { mean, var } => {
            if mean.shape() != [c] || var.shape() != [c] {
                return Err(Error::shape("batch_norm", "running statistics do not match channels"));
            }
            (mean.data().to_vec(), var.data().to_vec(), None)
        }
        BnStats::Train { .. } | BnStats::TrainDetached => {
            if count < 2 {
                return Err(Error::InvalidArgument(format!(
                    "batch_norm in train mode needs at least 2 values per channel, got {count}"
                )));
            }
            let inv_count = T::from_usize(count).unwrap().recip();
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut acc = T::zero();
                for s in 0..n {
                    acc = acc + xd[at(s, ch)..at(s, ch) + area].iter().copied().sum::<T>();
                }
                let m = acc * inv_count;
                let mut sq = T::zero();
                for s in 0..n {
                    for &v in &xd[at(s, ch)..at(s, ch) + area] {
                        sq = sq + (v - m) * (v - m);
                    }
                }
                mean[ch] = m;
                var[ch] = sq * inv_count;
            }
            let unbias = T::from_usize(count).unwrap() / T::from_usize(count - 1).unwrap();
            let unbiased = var.iter().map(|&v| v * unbias).collect();
            (mean.clone(), var, Some((mean, unbiased)))
        }
    };

    let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut out = vec![T::zero(); xd.len()];
    for s in 0..n {
        for ch in 0..c {
            let (g, b, m, is) = (gamma.data()[ch], beta.data()[ch], mean[ch], inv_std[ch]);
            let range = at(s, ch)..at(s, ch) + area;
            for ((o, xh), &v) in out[range.clone()].iter_mut().zip(&mut xhat[range.clone()]).zip(&xd[range]) {
                *xh = (v - m) * is;
                *o = g * *xh + b;
            }
        }
    }
    Ok(BnForward {
        output: Tensor::from_parts(x.shape().to_vec(), out),
        xhat,
        inv_std,
        batch_stats,
    })
}

pub(crate) fn batch_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    xhat: &[T],
    inv_std: &[T],
    train: bool,
    up: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, c, area) = channel_layout(x).expect("validated in forward");
    let count = T::from_usize(n * area).unwrap();
    let dy = up.data();
    let at = |s: usize, ch: usize| (s * c + ch) * area;
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for s in 0..n {
            let r = at(s, ch)..at(s, ch) + area;
            for (&g, &xh) in dy[r.clone()].iter().zip(&xhat[r]) {
                sum_dy = sum_dy + g;
                sum_dy_xhat = sum_dy_xhat + g * xh;
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let scale = gamma.data()[ch] * inv_std[ch];
        for s in 0..n {
            let r = at(s, ch)..at(s, ch) + area;
            for ((d, &g), &xh) in dx[r.clone()].iter_mut().zip(&dy[r.clone()]).zip(&xhat[r]) {
                *d = if train {
                    scale * (g - (sum_dy + xh * sum_dy_xhat) / count)
                } else {
                    scale * g
                };
            }
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    )
}
