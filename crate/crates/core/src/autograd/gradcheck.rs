//! Central finite-difference verification of analytic gradients.
//!
//! The checked function is `L = sum(R * f(inputs))` for a fixed random
//! projection `R`, so every output element contributes. The numerical
//! derivative is the five-point stencil
//! `(8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h`, formed from the
//! perturbed output tensors before projection so cancellation error stays
//! away from the reduction. Its truncation error is O(h^4), which allows a
//! step large enough that rounding noise (about eps / h) stays far below the
//! tolerance even for near-zero gradient entries.
//!
//! When a perturbation flips a relu or max-pool branch the step is retried at
//! 1/10 and 1/100 of its size; coordinates that still straddle a kink are
//! reported and excluded, since such a difference estimates neither one-sided
//! derivative.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check this many randomly chosen entries per input; `None` checks all.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl GradCheckOptions {
    pub fn new(tolerance: f64) -> Self {
        GradCheckOptions { step: FD_STEP, tolerance, max_entries: None, seed: 0 }
    }

    pub fn sampled(mut self, per_tensor: usize) -> Self {
        self.max_entries = Some(per_tensor);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Result for one input tensor.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub shape: Vec<usize>,
    pub checked: usize,
    pub kinks: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst entry with its (analytic, numeric) values.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.checked > 0 && t.max_rel_error < self.tolerance)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<48} {:>16} {:>8} {:>6} {:>12}  status\n",
            "tensor", "shape", "checked", "kinks", "max_rel_err"
        );
        for t in &self.tensors {
            let status = if t.checked > 0 && t.max_rel_error < self.tolerance { "PASS" } else { "FAIL" };
            s.push_str(&format!(
                "{:<48} {:>16} {:>8} {:>6} {:>12.3e}  {status}\n",
                t.name,
                format!("{:?}", t.shape),
                t.checked,
                t.kinks,
                t.max_rel_error
            ));
        }
        s
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Random tensor with entries uniform in [-1, 1).
pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Checks the gradient of `build(graph, inputs)` with respect to each named
/// input. `build` must be deterministic.
pub fn grad_check<F>(build: F, inputs: &[(String, Tensor<f64>)], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let forward = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.input(t.clone(), true)).collect();
        let out = build(&mut g, &vars)?;
        Ok((g, vars, out))
    };

    let base: Vec<Tensor<f64>> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let (mut g, vars, out) = forward(&base)?;
    let projection = random_tensor(g.shape(out), &mut rng);
    let r = g.input(projection.clone(), false);
    let weighted = g.mul(out, r)?;
    let loss = g.sum(weighted)?;
    g.backward(loss)?;
    let base_kinks = g.kink_signature();

    let mut tensors = Vec::with_capacity(inputs.len());
    for (i, (name, tensor)) in inputs.iter().enumerate() {
        let n = tensor.numel();
        let analytic = g
            .grad(vars[i])
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; n]);
        // Sampled checks draw spare candidates so entries lost to kinks are replaced.
        let (entries, quota): (Vec<usize>, usize) = match opts.max_entries {
            Some(k) if k < n => (sample(&mut rng, n, n.min(4 * k)).into_vec(), k),
            _ => ((0..n).collect(), n),
        };
        let mut report = TensorCheck {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            checked: 0,
            kinks: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        let mut values = base.clone();
        for &e in &entries {
            if report.checked == quota {
                break;
            }
            let orig = values[i].data()[e];
            let mut estimate = None;
            for shrink in [1.0, 0.1, 0.01] {
                let h = opts.step * shrink;
                let mut outs = Vec::with_capacity(4);
                let mut kink = false;
                for k in [1.0, -1.0, 2.0, -2.0] {
                    values[i].data_mut()[e] = orig + k * h;
                    let (gk, _, ok) = forward(&values)?;
                    kink |= gk.kink_signature() != base_kinks;
                    outs.push(gk.value(ok).data().to_vec());
                    if kink {
                        break;
                    }
                }
                values[i].data_mut()[e] = orig;
                if !kink {
                    let diff: f64 = (0..projection.numel())
                        .map(|j| {
                            let d = 8.0 * (outs[0][j] - outs[1][j]) - (outs[2][j] - outs[3][j]);
                            projection.data()[j] * d
                        })
                        .sum();
                    estimate = Some(diff / (12.0 * h));
                    break;
                }
            }
            let Some(numeric) = estimate else {
                report.kinks += 1;
                continue;
            };
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("finite difference of {name}[{e}]")));
            }
            let err = relative_error(analytic[e], numeric);
            report.checked += 1;
            if err >= report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((e, analytic[e], numeric));
            }
        }
        tensors.push(report);
    }
    Ok(GradCheckReport { tolerance: opts.tolerance, tensors })
}

/// [`grad_check`] on freshly drawn uniform inputs of the given shapes.
pub fn grad_check_shapes<F>(build: F, shapes: &[&[usize]], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let inputs: Vec<(String, Tensor<f64>)> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| (format!("input{i}"), random_tensor(s, &mut rng)))
        .collect();
    grad_check(build, &inputs, opts)
}
