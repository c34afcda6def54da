use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::raster::RasterImage;
use super::{SampleRecord, Target};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// RGB textures whose class sets the blob radius and count.
    Blobs,
    /// Grayscale disks with exact binary masks.
    Circles,
    /// Grayscale Gaussian spots annotated by their centers.
    Dots,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Blobs => "blobs",
            SynthKind::Circles => "circles",
            SynthKind::Dots => "dots",
        })
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(SynthKind::Blobs),
            "circles" => Ok(SynthKind::Circles),
            "dots" => Ok(SynthKind::Dots),
            _ => Err(Error::Config(format!("unknown synthetic kind {s:?} (expected blobs, circles or dots)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub size: usize,
    pub seed: u64,
    /// Number of classes for blobs.
    pub classes: usize,
    /// Records are spread round-robin over this many patient ids.
    pub patients: usize,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, size: usize, seed: u64) -> Self {
        SynthSpec { kind, n, size, seed, classes: 2, patients: 10 }
    }
}

/// Deterministic synthetic dataset; pixel values are multiples of 1/255 so
/// the set survives a PNG round trip unchanged.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Vec<SampleRecord>> {
    if spec.size < 16 {
        return Err(Error::InvalidArgument(format!("synthetic images need size >= 16, got {}", spec.size)));
    }
    if spec.kind == SynthKind::Blobs && spec.classes < 2 {
        return Err(Error::InvalidArgument("blobs need at least 2 classes".into()));
    }
    let patients = spec.patients.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n)
        .map(|i| {
            let (image, target) = match spec.kind {
                SynthKind::Blobs => blobs(&mut rng, spec.size, i % spec.classes)?,
                SynthKind::Circles => circles(&mut rng, spec.size)?,
                SynthKind::Dots => dots(&mut rng, spec.size)?,
            };
            Ok(SampleRecord {
                image: image.quantized(),
                target,
                patient_id: format!("patient{:02}", i % patients),
                source_path: format!("synth:{}:{}:{i}", spec.kind, spec.seed),
            })
        })
        .collect()
}

fn noise(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("positive sd")
}

fn blobs(rng: &mut ChaCha8Rng, size: usize, class: usize) -> Result<(RasterImage, Target)> {
    let scale = size as f64 / 64.0;
    let radius = (2.0 + 2.5 * class as f64) * scale;
    let coverage = 0.12 + 0.05 * class as f64;
    let count = ((coverage * (size * size) as f64) / (std::f64::consts::PI * radius * radius)).round().max(1.0) as usize;
    let centers: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let r = radius * rng.random_range(0.8..1.2);
            (rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64), r)
        })
        .collect();
    let mut alpha = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let a = centers
                .iter()
                .map(|&(cx, cy, r)| (r + 0.5 - ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt()).clamp(0.0, 1.0))
                .fold(0.0, f64::max);
            alpha[y * size + x] = a;
        }
    }
    let background = [0.92, 0.78, 0.86];
    let stain = [0.42, 0.24, 0.58];
    let n = noise(0.03);
    let image = RasterImage::from_fn(size, size, 3, |c, y, x| {
        let a = alpha[y * size + x];
        background[c] * (1.0 - a) + stain[c] * a + n.sample(rng)
    })?;
    Ok((image, Target::Class(class)))
}

fn circles(rng: &mut ChaCha8Rng, size: usize) -> Result<(RasterImage, Target)> {
    let scale = size as f64 / 64.0;
    let count = rng.random_range(1..=3);
    let disks: Vec<(f64, f64, f64)> = (0..count)
        .map(|_| {
            let r = rng.random_range(6.0..14.0) * scale;
            (rng.random_range(r..size as f64 - r), rng.random_range(r..size as f64 - r), r)
        })
        .collect();
    let inside = |x: usize, y: usize| {
        disks.iter().any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    };
    let mask = RasterImage::from_fn(size, size, 1, |_, y, x| if inside(x, y) { 1.0 } else { 0.0 })?;
    let n = noise(0.05);
    let image = RasterImage::from_fn(size, size, 1, |_, y, x| {
        let base = if inside(x, y) { 0.75 } else { 0.2 };
        base + n.sample(rng)
    })?;
    Ok((image, Target::Mask(mask)))
}

fn dots(rng: &mut ChaCha8Rng, size: usize) -> Result<(RasterImage, Target)> {
    let scale = size as f64 / 64.0;
    let wanted = rng.random_range(3..=8);
    let (margin, min_sep, spot_sd) = (4.0 * scale, 10.0 * scale, 1.5 * scale);
    let mut centers: Vec<(f64, f64)> = Vec::new();
    for _ in 0..200 {
        if centers.len() == wanted {
            break;
        }
        let lo = margin.ceil() as usize;
        let hi = size - lo;
        let c = (rng.random_range(lo..hi) as f64, rng.random_range(lo..hi) as f64);
        if centers.iter().all(|&(x, y)| (x - c.0).hypot(y - c.1) >= min_sep) {
            centers.push(c);
        }
    }
    let n = noise(0.03);
    let image = RasterImage::from_fn(size, size, 1, |_, y, x| {
        let spot: f64 = centers
            .iter()
            .map(|&(cx, cy)| 0.8 * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * spot_sd * spot_sd)).exp())
            .sum();
        0.1 + spot + n.sample(rng)
    })?;
    Ok((image, Target::Dots(centers)))
}
