use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

pub(crate) fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Subgradient at exactly zero is zero.
pub(crate) fn relu_backward<T: Scalar>(x: &Tensor<T>, up: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(up.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    // Split by sign so exp never overflows.
    if v >= T::zero() {
        (T::one() + (-v).exp()).recip()
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| sigmoid_scalar(v)).collect())
}

pub(crate) fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, up: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(up.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::from_parts(y.shape().to_vec(), data)
}

pub(crate) fn zip_same<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

pub(crate) fn mul_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, up: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let ga = b.data().iter().zip(up.data()).map(|(&y, &g)| y * g).collect();
    let gb = a.data().iter().zip(up.data()).map(|(&x, &g)| x * g).collect();
    (
        Tensor::from_parts(a.shape().to_vec(), ga),
        Tensor::from_parts(b.shape().to_vec(), gb),
    )
}

pub(crate) fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (Some((n, ca, h, w)), Some((nb, cb, hb, wb))) = (a.dims4(), b.dims4()) else {
        return Err(Error::shape("concat_channels", "inputs must be rank 4"));
    };
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape(
            "concat_channels",
            format!("{:?} vs {:?} differ outside the channel axis", a.shape(), b.shape()),
        ));
    }
    let (pa, pb) = (ca * h * w, cb * h * w);
    let mut data = Vec::with_capacity(n * (pa + pb));
    for s in 0..n {
        data.extend_from_slice(&a.data()[s * pa..(s + 1) * pa]);
        data.extend_from_slice(&b.data()[s * pb..(s + 1) * pb]);
    }
    Ok(Tensor::from_parts(vec![n, ca + cb, h, w], data))
}

pub(crate) fn concat_backward<T: Scalar>(
    a_shape: &[usize],
    b_shape: &[usize],
    up: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let n = a_shape[0];
    let pa: usize = a_shape[1..].iter().product();
    let pb: usize = b_shape[1..].iter().product();
    let mut ga = Vec::with_capacity(n * pa);
    let mut gb = Vec::with_capacity(n * pb);
    for s in 0..n {
        let chunk = &up.data()[s * (pa + pb)..(s + 1) * (pa + pb)];
        ga.extend_from_slice(&chunk[..pa]);
        gb.extend_from_slice(&chunk[pa..]);
    }
    (
        Tensor::from_parts(a_shape.to_vec(), ga),
        Tensor::from_parts(b_shape.to_vec(), gb),
    )
}

pub(crate) fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let ([n, cin], [cout, wcin]) = (x.shape(), w.shape()) else {
        return Err(Error::shape("linear", format!("input {:?}, weight {:?}", x.shape(), w.shape())));
    };
    if cin != wcin || b.shape() != [*cout] {
        return Err(Error::shape(
            "linear",
            format!("input {:?}, weight {:?}, bias {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let (n, cout) = (*n, *cout);
    let mut out = Vec::with_capacity(n * cout);
    for _ in 0..n {
        out.extend_from_slice(b.data());
    }
    gemm(MatRef::new(x.data(), n, *cin), MatRef::new(w.data(), cout, *cin).t(), T::one(), &mut out);
    Ok(Tensor::from_parts(vec![n, cout], out))
}

pub(crate) fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    up: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, cin) = (x.shape()[0], x.shape()[1]);
    let cout = w.shape()[0];
    let dy = MatRef::new(up.data(), n, cout);
    let mut dx = vec![T::zero(); n * cin];
    gemm(dy, MatRef::new(w.data(), cout, cin), T::zero(), &mut dx);
    let mut dw = vec![T::zero(); cout * cin];
    gemm(dy.t(), MatRef::new(x.data(), n, cin), T::zero(), &mut dw);
    let mut db = vec![T::zero(); cout];
    for row in up.data().chunks(cout) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(w.shape().to_vec(), dw),
        Tensor::from_parts(vec![cout], db),
    )
}
