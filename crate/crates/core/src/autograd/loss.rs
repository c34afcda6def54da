use super::pointwise::sigmoid_scalar;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub(crate) fn softmax_ce<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(Tensor<T>, Vec<T>)> {
    let [n, k] = logits.shape() else {
        return Err(Error::shape("softmax_cross_entropy", format!("logits must be [N,K], got {:?}", logits.shape())));
    };
    let (n, k) = (*n, *k);
    if k < 2 {
        return Err(Error::InvalidArgument(format!("softmax_cross_entropy needs K >= 2, got {k}")));
    }
    if labels.len() != n {
        return Err(Error::shape("softmax_cross_entropy", format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {k} classes")));
    }
    let mut probs = Vec::with_capacity(n * k);
    let mut total = T::zero();
    for (row, &label) in logits.data().chunks(k).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum_exp: T = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total = total + (log_z - row[label]);
        probs.extend(row.iter().map(|&z| (z - log_z).exp()));
    }
    let loss = total / T::from_usize(n).unwrap();
    Ok((Tensor::scalar(loss), probs))
}

pub(crate) fn softmax_ce_backward<T: Scalar>(
    shape: &[usize],
    labels: &[usize],
    probs: &[T],
    up: &Tensor<T>,
) -> Tensor<T> {
    let (n, k) = (shape[0], shape[1]);
    let scale = up.data()[0] / T::from_usize(n).unwrap();
    let mut g = probs.to_vec();
    for (s, &label) in labels.iter().enumerate() {
        g[s * k + label] = g[s * k + label] - T::one();
    }
    g.iter_mut().for_each(|v| *v = *v * scale);
    Tensor::from_parts(shape.to_vec(), g)
}

fn check_same<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.numel() == 0 {
        return Err(Error::InvalidArgument(format!("{op} of empty tensors")));
    }
    Ok(())
}

pub(crate) fn sigmoid_bce<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    check_same("sigmoid_bce", logits, target)?;
    // max(z,0) - z*t + ln(1 + e^{-|z|})
    let total: T = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    Ok(Tensor::scalar(total / T::from_usize(logits.numel()).unwrap()))
}

pub(crate) fn sigmoid_bce_backward<T: Scalar>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    up: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let scale = up.data()[0] / T::from_usize(logits.numel()).unwrap();
    let dz = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| (sigmoid_scalar(z) - t) * scale)
        .collect();
    let dt = logits.data().iter().map(|&z| -z * scale).collect();
    (
        Tensor::from_parts(logits.shape().to_vec(), dz),
        Tensor::from_parts(target.shape().to_vec(), dt),
    )
}

pub(crate) fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    check_same("mse_loss", pred, target)?;
    let total: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(Tensor::scalar(total / T::from_usize(pred.numel()).unwrap()))
}

pub(crate) fn mse_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, up: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let scale = up.data()[0] * T::from_f64_lossy(2.0) / T::from_usize(pred.numel()).unwrap();
    let dp: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * scale)
        .collect();
    let dt = dp.iter().map(|&v| -v).collect();
    (
        Tensor::from_parts(pred.shape().to_vec(), dp),
        Tensor::from_parts(target.shape().to_vec(), dt),
    )
}
