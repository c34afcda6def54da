use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn even_dims<T: Scalar>(op: &'static str, x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = x
        .dims4()
        .ok_or_else(|| Error::shape(op, format!("expected [N,C,H,W], got {:?}", x.shape())))?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(op, format!("spatial dims {h}x{w} must be even")));
    }
    Ok((n, c, h, w))
}

pub(crate) fn avg_pool2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = even_dims("avg_pool2", x)?;
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64_lossy(0.25);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let p = &xd[plane * h * w..(plane + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let i = 2 * oy * w + 2 * ox;
                out.push((p[i] + p[i + 1] + p[i + w] + p[i + w + 1]) * quarter);
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, c, ho, wo], out))
}

pub(crate) fn avg_pool2_backward<T: Scalar>(in_shape: &[usize], up: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (in_shape[2], in_shape[3]);
    let wo = w / 2;
    let quarter = T::from_f64_lossy(0.25);
    let mut dx = vec![T::zero(); in_shape.iter().product()];
    for (plane, dp) in dx.chunks_mut(h * w).enumerate() {
        let g = &up.data()[plane * (h / 2) * wo..(plane + 1) * (h / 2) * wo];
        for y in 0..h {
            for x in 0..w {
                dp[y * w + x] = g[(y / 2) * wo + x / 2] * quarter;
            }
        }
    }
    Tensor::from_parts(in_shape.to_vec(), dx)
}

/// Non-overlapping 2x2 max; ties go to the first element in row-major order.
pub(crate) fn max_pool2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, c, h, w) = even_dims("max_pool2", x)?;
    let (ho, wo) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let cands = [
                    base + 2 * oy * w + 2 * ox,
                    base + 2 * oy * w + 2 * ox + 1,
                    base + (2 * oy + 1) * w + 2 * ox,
                    base + (2 * oy + 1) * w + 2 * ox + 1,
                ];
                let mut best = cands[0];
                for &i in &cands[1..] {
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                out.push(xd[best]);
                argmax.push(best as u32);
            }
        }
    }
    Ok((Tensor::from_parts(vec![n, c, ho, wo], out), argmax))
}

pub(crate) fn max_pool2_backward<T: Scalar>(in_shape: &[usize], argmax: &[u32], up: &Tensor<T>) -> Tensor<T> {
    let mut dx = vec![T::zero(); in_shape.iter().product()];
    for (&i, &g) in argmax.iter().zip(up.data()) {
        dx[i as usize] = dx[i as usize] + g;
    }
    Tensor::from_parts(in_shape.to_vec(), dx)
}

/// Nearest-neighbour 2x upsampling.
pub(crate) fn upsample2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x
        .dims4()
        .ok_or_else(|| Error::shape("upsample2", format!("expected [N,C,H,W], got {:?}", x.shape())))?;
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks(h * w) {
        for y in 0..ho {
            let row = &plane[(y / 2) * w..(y / 2 + 1) * w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    Ok(Tensor::from_parts(vec![n, c, ho, wo], out))
}

pub(crate) fn upsample2_backward<T: Scalar>(in_shape: &[usize], up: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (in_shape[2], in_shape[3]);
    let wo = 2 * w;
    let mut dx = vec![T::zero(); in_shape.iter().product()];
    for (plane, dp) in dx.chunks_mut(h * w).enumerate() {
        let g = &up.data()[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * wo + 2 * x;
                dp[y * w + x] = g[i] + g[i + 1] + g[i + wo] + g[i + wo + 1];
            }
        }
    }
    Tensor::from_parts(in_shape.to_vec(), dx)
}

pub(crate) fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x
        .dims4()
        .ok_or_else(|| Error::shape("global_avg_pool", format!("expected [N,C,H,W], got {:?}", x.shape())))?;
    let inv = T::from_usize(h * w).unwrap().recip();
    let out = x.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Ok(Tensor::from_parts(vec![n, c], out))
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(in_shape: &[usize], up: &Tensor<T>) -> Tensor<T> {
    let area = in_shape[2] * in_shape[3];
    let inv = T::from_usize(area).unwrap().recip();
    let mut dx = Vec::with_capacity(in_shape.iter().product());
    for &g in up.data() {
        dx.extend(std::iter::repeat_n(g * inv, area));
    }
    Tensor::from_parts(in_shape.to_vec(), dx)
}
