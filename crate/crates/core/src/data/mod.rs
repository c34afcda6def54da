//! Dataset preparation: rasters, patch grids, resampling, rotation
//! augmentation, class balancing, density targets, splits, synthetic
//! stand-in datasets and CSV manifests.
//!
//! Dot coordinates are zero-based with pixel centers on integers, so a dot
//! is inside a `w` x `h` image when `-0.5 <= x < w - 0.5` (likewise `y`).

mod density;
mod manifest;
mod raster;
mod split;
mod synth;
#[cfg(test)]
mod tests;
mod transform;

pub use density::{density_target, DensityMap, DEFAULT_SIGMA};
pub use manifest::{load_manifest, read_dots_csv, write_dataset, write_dots_csv};
pub use raster::RasterImage;
pub use split::{
    balance_classes, balance_indices, split_fraction, split_fraction_indices, split_one_patient_out,
};
pub use synth::{gen_synthetic, SynthKind, SynthSpec};
pub use transform::{resize, rotate, rotate_point, Interp};

use crate::error::{Error, Result};

/// Rotation angles applied by default augmentation, in degrees.
pub const DEFAULT_ANGLES: [f64; 7] = [0.0, 45.0, 90.0, 135.0, 180.0, 215.0, 270.0];

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    /// Binary mask with the image's dimensions.
    Mask(RasterImage),
    /// Annotated object centers `(x, y)`.
    Dots(Vec<(f64, f64)>),
}

impl Target {
    pub fn kind(&self) -> &'static str {
        match self {
            Target::Class(_) => "class",
            Target::Mask(_) => "mask",
            Target::Dots(_) => "dots",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub image: RasterImage,
    pub target: Target,
    pub patient_id: String,
    pub source_path: String,
}

pub fn dot_in_bounds(x: f64, y: f64, width: usize, height: usize) -> bool {
    (-0.5..width as f64 - 0.5).contains(&x) && (-0.5..height as f64 - 0.5).contains(&y)
}

impl SampleRecord {
    pub fn class(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            _ => None,
        }
    }

    /// Checks the target against the image dimensions.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.image.width(), self.image.height());
        match &self.target {
            Target::Class(_) => Ok(()),
            Target::Mask(m) => {
                if (m.width(), m.height(), m.channels()) != (w, h, 1) {
                    return Err(Error::InvalidArgument(format!(
                        "mask is {}x{}x{}, image is {w}x{h}",
                        m.width(),
                        m.height(),
                        m.channels()
                    )));
                }
                if !m.is_binary() {
                    return Err(Error::InvalidArgument("mask is not binary".into()));
                }
                Ok(())
            }
            Target::Dots(dots) => match dots.iter().find(|&&(x, y)| !dot_in_bounds(x, y, w, h)) {
                Some((x, y)) => Err(Error::InvalidArgument(format!("dot ({x}, {y}) outside {w}x{h} image"))),
                None => Ok(()),
            },
        }
    }
}

/// Non-overlapping `patch` x `patch` tiles in row-major order, anchored at
/// the top-left corner; right and bottom remainders are dropped. Masks are
/// cropped alongside and dots are shifted into patch coordinates.
pub fn extract_patches(record: &SampleRecord, patch: usize) -> Result<Vec<SampleRecord>> {
    if patch == 0 {
        return Err(Error::InvalidArgument("patch size must be at least 1".into()));
    }
    let (w, h) = (record.image.width(), record.image.height());
    if patch > w || patch > h {
        log::warn!("{}: patch {patch} larger than {w}x{h} image, no patches", record.source_path);
        return Ok(Vec::new());
    }
    let (cols, rows) = (w / patch, h / patch);
    let mut out = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let (x0, y0) = (c * patch, r * patch);
            let target = match &record.target {
                Target::Class(k) => Target::Class(*k),
                Target::Mask(m) => Target::Mask(m.crop(x0, y0, patch, patch)?),
                Target::Dots(dots) => Target::Dots(
                    dots.iter()
                        .map(|&(x, y)| (x - x0 as f64, y - y0 as f64))
                        .filter(|&(x, y)| dot_in_bounds(x, y, patch, patch))
                        .collect(),
                ),
            };
            out.push(SampleRecord {
                image: record.image.crop(x0, y0, patch, patch)?,
                target,
                patient_id: record.patient_id.clone(),
                source_path: format!("{}#r{r}c{c}", record.source_path),
            });
        }
    }
    Ok(out)
}

/// One rotated copy of `record` per angle, in the order given.
pub fn rotate_augment(record: &SampleRecord, angles_deg: &[f64]) -> Result<Vec<SampleRecord>> {
    let (w, h) = (record.image.width(), record.image.height());
    angles_deg
        .iter()
        .map(|&angle| {
            if !(0.0..360.0).contains(&angle) {
                return Err(Error::InvalidArgument(format!("rotation angle {angle} outside [0, 360)")));
            }
            let image = rotate(&record.image, angle, Interp::Bilinear)?;
            let target = match &record.target {
                Target::Class(k) => Target::Class(*k),
                Target::Mask(m) => Target::Mask(rotate(m, angle, Interp::Nearest)?),
                Target::Dots(dots) => Target::Dots(
                    dots.iter()
                        .map(|&(x, y)| rotate_point(x, y, w, h, angle))
                        .filter(|&(x, y)| dot_in_bounds(x, y, image.width(), image.height()))
                        .collect(),
                ),
            };
            Ok(SampleRecord {
                image,
                target,
                patient_id: record.patient_id.clone(),
                source_path: format!("{}@rot{angle}", record.source_path),
            })
        })
        .collect()
}

/// Resamples the image (bilinear) and any mask (nearest) to `new_w` x
/// `new_h`; dots move with the pixel grid.
pub fn resize_record(record: &SampleRecord, new_w: usize, new_h: usize) -> Result<SampleRecord> {
    let (w, h) = (record.image.width(), record.image.height());
    let image = resize(&record.image, new_w, new_h, Interp::Bilinear)?;
    let (sx, sy) = (new_w as f64 / w as f64, new_h as f64 / h as f64);
    let target = match &record.target {
        Target::Class(k) => Target::Class(*k),
        Target::Mask(m) => Target::Mask(resize(m, new_w, new_h, Interp::Nearest)?),
        Target::Dots(dots) => Target::Dots(
            dots.iter()
                .map(|&(x, y)| ((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5))
                .filter(|&(x, y)| dot_in_bounds(x, y, new_w, new_h))
                .collect(),
        ),
    };
    Ok(SampleRecord { image, target, patient_id: record.patient_id.clone(), source_path: record.source_path.clone() })
}
