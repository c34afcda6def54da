use std::f64::consts::PI;

use super::dot_in_bounds;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Gaussian width used for density targets unless configured otherwise.
pub const DEFAULT_SIGMA: f64 = 2.0;

/// Non-negative map whose sum estimates the number of annotated objects.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `[1, H, W]` tensor of the map.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_parts(
            vec![1, self.height, self.width],
            self.values.iter().map(|&v| T::from_f64_lossy(v)).collect(),
        )
    }
}

/// Superposes one unit-mass isotropic Gaussian per dot, evaluated at pixel
/// centers and truncated beyond `4 * sigma`.
pub fn density_target(dots: &[(f64, f64)], width: usize, height: usize, sigma: f64) -> Result<DensityMap> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("density sigma must be positive, got {sigma}")));
    }
    let mut values = vec![0.0; width * height];
    let radius = 4.0 * sigma;
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    for &(dx, dy) in dots {
        if !dot_in_bounds(dx, dy, width, height) {
            return Err(Error::InvalidArgument(format!("dot ({dx}, {dy}) outside {width}x{height} map")));
        }
        let x0 = (dx - radius).ceil().max(0.0) as usize;
        let x1 = ((dx + radius).floor() as usize).min(width - 1);
        let y0 = (dy - radius).ceil().max(0.0) as usize;
        let y1 = ((dy + radius).floor() as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - dx).powi(2) + (y as f64 - dy).powi(2);
                if d2 <= radius * radius {
                    values[y * width + x] += norm * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }
    Ok(DensityMap { width, height, sigma, values })
}
