//! Convolution via im2col and GEMM.
//!
//! Samples of a batch are processed independently (and in parallel when the
//! rayon pool has more than one thread); the weight gradient is reduced over
//! per-sample partials in sample order so results do not depend on the
//! thread count.

use rayon::prelude::*;

use super::Fault;
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

/// Border handling for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding of `(k-1)/2`; preserves size at stride 1.
    Same,
    /// No padding.
    Valid,
    /// Periodic wrap of `(k-1)/2`; preserves size at stride 1.
    Circular,
}

impl Padding {
    fn amount(self, k: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same | Padding::Circular => (k - 1) / 2,
        }
    }
}

/// Output length along one axis, or `None` if the kernel does not fit.
pub fn conv_output_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    circular: bool,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_area(&self) -> usize {
        self.ho * self.wo
    }

    /// 1x1 stride-1 convolutions read the input directly as the column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Maps a padded coordinate to a source index, if any.
    #[inline]
    fn source(&self, pos: isize, len: usize) -> Option<usize> {
        if pos >= 0 && (pos as usize) < len {
            Some(pos as usize)
        } else if self.circular {
            Some(pos.rem_euclid(len as isize) as usize)
        } else {
            None
        }
    }
}

fn geometry<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Geometry> {
    let (_, cin, h, w) = input
        .dims4()
        .ok_or_else(|| Error::shape("conv2d", format!("input must be rank 4, got {:?}", input.shape())))?;
    let (_, wcin, kh, kw) = weight
        .dims4()
        .ok_or_else(|| Error::shape("conv2d", format!("weight must be rank 4, got {:?}", weight.shape())))?;
    if wcin != cin {
        return Err(Error::shape(
            "conv2d",
            format!("input has {cin} channels, weight expects {wcin}"),
        ));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::InvalidArgument(format!("conv2d kernel must be square and odd, got {kh}x{kw}")));
    }
    if stride == 0 {
        return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
    }
    let pad = padding.amount(kh);
    let (ho, wo) = match (conv_output_len(h, kh, stride, pad), conv_output_len(w, kh, stride, pad)) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 => (ho, wo),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("{h}x{w} input too small for {kh}x{kh} kernel with padding {pad}"),
            ))
        }
    };
    Ok(Geometry { cin, h, w, k: kh, stride, pad, circular: padding == Padding::Circular, ho, wo })
}

fn im2col<T: Scalar>(g: &Geometry, x: &[T], cols: &mut [T]) {
    let area = g.out_area();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * area..(row + 1) * area];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    let Some(sy) = g.source(iy, g.h) else {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    };
                    let src = &plane[sy * g.w..(sy + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = match g.source(ix, g.w) {
                            Some(sx) => src[sx],
                            None => T::zero(),
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(g: &Geometry, cols: &[T], dx: &mut [T]) {
    let area = g.out_area();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * area..(row + 1) * area];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let Some(sy) = g.source(iy, g.h) else { continue };
                    let in_row = &src[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, &v) in in_row.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if let Some(sx) = g.source(ix, g.w) {
                            plane[sy * g.w + sx] = plane[sy * g.w + sx] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = geometry(input, weight, stride, padding)?;
    let n = input.shape()[0];
    let cout = weight.shape()[0];
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("conv2d", format!("bias shape {:?}, expected [{cout}]", b.shape())));
        }
    }
    let in_per = g.cin * g.h * g.w;
    let area = g.out_area();
    let mut out = vec![T::zero(); n * cout * area];
    let x = input.data();
    let wmat = MatRef::new(weight.data(), cout, g.rows());

    out.par_chunks_mut(cout * area).enumerate().for_each_init(
        || if g.is_pointwise() { Vec::new() } else { vec![T::zero(); g.rows() * area] },
        |cols, (s, out_s)| {
            let xs = &x[s * in_per..(s + 1) * in_per];
            let colref = if g.is_pointwise() {
                MatRef::new(xs, g.rows(), area)
            } else {
                im2col(&g, xs, cols);
                MatRef::new(&cols[..], g.rows(), area)
            };
            gemm(wmat, colref, T::zero(), out_s);
            if let Some(b) = bias {
                for (co, row) in out_s.chunks_mut(area).enumerate() {
                    let bv = b.data()[co];
                    row.iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        },
    );
    Ok(Tensor::from_parts(vec![n, cout, g.ho, g.wo], out))
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    upstream: &Tensor<T>,
    stride: usize,
    padding: Padding,
    need_input_grad: bool,
    fault: Option<Fault>,
) -> ConvGrads<T> {
    let g = geometry(input, weight, stride, padding).expect("validated in forward");
    let n = input.shape()[0];
    let cout = weight.shape()[0];
    let rows = g.rows();
    let area = g.out_area();
    let in_per = g.cin * g.h * g.w;
    let x = input.data();
    let dy = upstream.data();
    let wmat = MatRef::new(weight.data(), cout, rows);

    let mut dx = if need_input_grad { vec![T::zero(); n * in_per] } else { Vec::new() };
    let mut partials = vec![T::zero(); n * cout * rows];

    let work = |s: usize, dw_s: &mut [T], dx_s: Option<&mut [T]>, cols: &mut Vec<T>| {
        let xs = &x[s * in_per..(s + 1) * in_per];
        let dys = MatRef::new(&dy[s * cout * area..(s + 1) * cout * area], cout, area);
        let colref = if g.is_pointwise() {
            MatRef::new(xs, rows, area)
        } else {
            im2col(&g, xs, cols);
            MatRef::new(&cols[..], rows, area)
        };
        gemm(dys, colref.t(), T::zero(), dw_s);
        if let Some(dx_s) = dx_s {
            if g.is_pointwise() {
                gemm(wmat.t(), dys, T::zero(), dx_s);
            } else {
                gemm(wmat.t(), dys, T::zero(), cols);
                col2im(&g, cols, dx_s);
            }
        }
    };

    let fresh = || if g.is_pointwise() { Vec::new() } else { vec![T::zero(); rows * area] };
    if need_input_grad {
        partials
            .par_chunks_mut(cout * rows)
            .zip(dx.par_chunks_mut(in_per))
            .enumerate()
            .for_each_init(fresh, |cols, (s, (dw_s, dx_s))| work(s, dw_s, Some(dx_s), cols));
    } else {
        partials
            .par_chunks_mut(cout * rows)
            .enumerate()
            .for_each_init(fresh, |cols, (s, dw_s)| work(s, dw_s, None, cols));
    }

    let mut dw = vec![T::zero(); cout * rows];
    for part in partials.chunks(cout * rows) {
        for (a, &b) in dw.iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    if fault == Some(Fault::ConvWeightGradTransposed) {
        let k = g.k;
        let orig = dw.clone();
        for plane in 0..cout * g.cin {
            for ky in 0..k {
                for kx in 0..k {
                    dw[plane * k * k + ky * k + kx] = orig[plane * k * k + kx * k + ky];
                }
            }
        }
    }

    let mut db = vec![T::zero(); cout];
    for s in 0..n {
        for (co, acc) in db.iter_mut().enumerate() {
            let row = &dy[(s * cout + co) * area..(s * cout + co + 1) * area];
            *acc = *acc + row.iter().copied().sum::<T>();
        }
    }

    ConvGrads {
        input: need_input_grad.then(|| Tensor::from_parts(input.shape().to_vec(), dx)),
        weight: Tensor::from_parts(weight.shape().to_vec(), dw),
        bias: Tensor::from_parts(vec![cout], db),
    }
}
