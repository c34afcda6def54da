use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter optimizer memory, in parameter-store order.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState<T> {
    Sgd { velocity: Vec<Tensor<T>> },
    Adam { m: Vec<Tensor<T>>, v: Vec<Tensor<T>>, step: u64 },
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, params: &ParamStore<T>) -> Self {
        let zeros = || params.params().map(|(_, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        match kind {
            OptimizerKind::Sgd { .. } => OptimizerState::Sgd { velocity: zeros() },
            OptimizerKind::Adam { .. } => OptimizerState::Adam { m: zeros(), v: zeros(), step: 0 },
        }
    }

    fn check(&self, params: &ParamStore<T>) -> Result<()> {
        let slots = match self {
            OptimizerState::Sgd { velocity } => velocity,
            OptimizerState::Adam { m, .. } => m,
        };
        let matches = slots.len() == params.len()
            && slots.iter().zip(params.params()).all(|(s, (_, p))| s.shape() == p.shape());
        if !matches {
            return Err(Error::InvalidArgument("optimizer state does not match the model parameters".into()));
        }
        Ok(())
    }

    /// Applies one update from the gradients currently held by `params`.
    pub fn step(&mut self, kind: OptimizerKind, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        self.check(params)?;
        match (self, kind) {
            (OptimizerState::Sgd { velocity }, OptimizerKind::Sgd { momentum }) => {
                sgd_step(params, velocity, lr, momentum);
                Ok(())
            }
            (OptimizerState::Adam { m, v, step }, OptimizerKind::Adam { beta1, beta2, eps }) => {
                *step += 1;
                adam_step(params, m, v, *step, lr, beta1, beta2, eps);
                Ok(())
            }
            _ => Err(Error::InvalidArgument("optimizer state kind differs from the configured optimizer".into())),
        }
    }
}

/// `v = momentum * v + g; theta -= lr * v`.
pub fn sgd_step<T: Scalar>(params: &mut ParamStore<T>, velocity: &mut [Tensor<T>], lr: f64, momentum: f64) {
    let (lr, mu) = (T::from_f64_lossy(lr), T::from_f64_lossy(momentum));
    for ((theta, g), vel) in params.values_and_grads_mut().zip(velocity) {
        for ((p, &g), v) in theta.data_mut().iter_mut().zip(g.data()).zip(vel.data_mut()) {
            *v = mu * *v + g;
            *p = *p - lr * *v;
        }
    }
}

/// Adam with bias correction; `step` counts from 1.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    m: &mut [Tensor<T>],
    v: &mut [Tensor<T>],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = T::from_f64_lossy(1.0 - beta1.powf(step as f64));
    let c2 = T::from_f64_lossy(1.0 - beta2.powf(step as f64));
    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
    let (lr, eps, one) = (T::from_f64_lossy(lr), T::from_f64_lossy(eps), T::one());
    for (((theta, g), mt), vt) in params.values_and_grads_mut().zip(m).zip(v) {
        let iter = theta.data_mut().iter_mut().zip(g.data()).zip(mt.data_mut()).zip(vt.data_mut());
        for (((p, &g), mi), vi) in iter {
            *mi = b1 * *mi + (one - b1) * g;
            *vi = b2 * *vi + (one - b2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Learning-rate schedule evaluated per (zero-based) epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Divide by `factor` every `period` epochs.
    StepDecay { period: usize, factor: f64 },
}

impl Schedule {
    pub fn lr(&self, lr0: f64, epoch: usize) -> f64 {
        match *self {
            Schedule::Constant => lr0,
            Schedule::StepDecay { period, factor } => step_decay(lr0, period, factor, epoch),
        }
    }
}

/// `lr0 * factor^(-floor(epoch / period))`.
pub fn step_decay(lr0: f64, period: usize, factor: f64, epoch: usize) -> f64 {
    lr0 / factor.powi((epoch / period.max(1)) as i32)
}
