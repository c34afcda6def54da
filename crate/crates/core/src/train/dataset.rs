use std::fmt;
use std::str::FromStr;

use crate::data::{density_target, SampleRecord, Target};
use crate::error::{Error, Result};
use crate::nn::Family;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classify,
    Segment,
    Detect,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Segment => "segment",
            Task::Detect => "detect",
        }
    }

    /// The model family that solves this task.
    pub fn family(self) -> Family {
        match self {
            Task::Classify => Family::Dcrn,
            Task::Segment => Family::R2UNet,
            Task::Detect => Family::UdNet,
        }
    }

    /// The task a model family is built for.
    pub fn for_family(family: Family) -> Task {
        match family {
            Family::Dcrn => Task::Classify,
            Family::R2UNet => Task::Segment,
            Family::UdNet => Task::Detect,
        }
    }

    /// Name of the metric tracked during training.
    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Classify => "accuracy",
            Task::Segment => "dice",
            Task::Detect => "mse",
        }
    }

    /// Whether a larger tracked metric is better.
    pub fn higher_is_better(self) -> bool {
        self != Task::Detect
    }

    fn target_kind(self) -> &'static str {
        match self {
            Task::Classify => "class",
            Task::Segment => "mask",
            Task::Detect => "dots",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "segment" => Ok(Task::Segment),
            "detect" => Ok(Task::Detect),
            _ => Err(Error::Config(format!("unknown task {s:?} (classify, segment, detect)"))),
        }
    }
}

/// Per-sample training targets.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T> {
    Classes(Vec<usize>),
    /// `[1, H, W]` binary masks.
    Masks(Vec<Tensor<T>>),
    /// `[1, H, W]` density maps multiplied by `scale`, plus the source dots.
    Density { maps: Vec<Tensor<T>>, dots: Vec<Vec<(f64, f64)>>, scale: f64 },
}

/// Options for turning records into tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOptions {
    pub sigma: f64,
    /// Multiplier for density targets; must match the model's density scale.
    pub density_scale: f64,
}

impl Default for TargetOptions {
    fn default() -> Self {
        TargetOptions { sigma: crate::data::DEFAULT_SIGMA, density_scale: 1.0 }
    }
}

impl TargetOptions {
    /// Options matching `spec`'s density scale.
    pub fn for_spec(spec: &crate::nn::ModelSpec, sigma: f64) -> Self {
        TargetOptions { sigma, density_scale: f64::from(spec.density_scale) }
    }
}

/// Model-ready samples: `[C, H, W]` inputs with matching targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<Tensor<T>>,
    pub targets: Targets<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_records(records: &[SampleRecord], task: Task, opts: TargetOptions) -> Result<Self> {
        let wrong = |r: &SampleRecord| {
            Error::Config(format!(
                "task {task} needs {} targets, {} has a {} target",
                task.target_kind(),
                r.source_path,
                r.target.kind()
            ))
        };
        if let Some(first) = records.first() {
            let dims = (first.image.width(), first.image.height(), first.image.channels());
            if let Some(r) = records.iter().find(|r| (r.image.width(), r.image.height(), r.image.channels()) != dims) {
                return Err(Error::InvalidArgument(format!(
                    "{} is {}x{}x{}, expected {}x{}x{} like the first sample",
                    r.source_path,
                    r.image.width(),
                    r.image.height(),
                    r.image.channels(),
                    dims.0,
                    dims.1,
                    dims.2
                )));
            }
        }
        if !(opts.density_scale > 0.0) {
            return Err(Error::Config(format!("density scale must be positive, got {}", opts.density_scale)));
        }
        let inputs = records.iter().map(|r| r.image.to_tensor()).collect();
        let targets = match task {
            Task::Classify => Targets::Classes(
                records.iter().map(|r| r.class().ok_or_else(|| wrong(r))).collect::<Result<_>>()?,
            ),
            Task::Segment => Targets::Masks(
                records
                    .iter()
                    .map(|r| match &r.target {
                        Target::Mask(m) => Ok(m.to_tensor()),
                        _ => Err(wrong(r)),
                    })
                    .collect::<Result<_>>()?,
            ),
            Task::Detect => {
                let mut maps = Vec::with_capacity(records.len());
                let mut dots = Vec::with_capacity(records.len());
                for r in records {
                    let Target::Dots(d) = &r.target else { return Err(wrong(r)) };
                    let mut map = density_target(d, r.image.width(), r.image.height(), opts.sigma)?;
                    map.values.iter_mut().for_each(|v| *v *= opts.density_scale);
                    maps.push(map.to_tensor());
                    dots.push(d.clone());
                }
                Targets::Density { maps, dots, scale: opts.density_scale }
            }
        };
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Classes(_) => Task::Classify,
            Targets::Masks(_) => Task::Segment,
            Targets::Density { .. } => Task::Detect,
        }
    }

    /// Multiplier applied to density targets (1 for other targets).
    pub fn density_scale(&self) -> f64 {
        match self.targets {
            Targets::Density { scale, .. } => scale,
            _ => 1.0,
        }
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick = |v: &[Tensor<T>]| indices.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        let targets = match &self.targets {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Masks(m) => Targets::Masks(pick(m)),
            Targets::Density { maps, dots, scale } => Targets::Density {
                maps: pick(maps),
                dots: indices.iter().map(|&i| dots[i].clone()).collect(),
                scale: *scale,
            },
        };
        Dataset { inputs: pick(&self.inputs), targets }
    }

    /// Stacked `[N, C, H, W]` inputs for `indices`.
    pub fn batch_inputs(&self, indices: &[usize]) -> Result<Tensor<T>> {
        Tensor::stack(&indices.iter().map(|&i| &self.inputs[i]).collect::<Vec<_>>())
    }

    /// Stacked `[N, 1, H, W]` map targets for `indices`; `None` for classes.
    pub(crate) fn batch_maps(&self, indices: &[usize]) -> Result<Option<Tensor<T>>> {
        let maps = match &self.targets {
            Targets::Classes(_) => return Ok(None),
            Targets::Masks(m) => m,
            Targets::Density { maps, .. } => maps,
        };
        Tensor::stack(&indices.iter().map(|&i| &maps[i]).collect::<Vec<_>>()).map(Some)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(c) => Some(c),
            _ => None,
        }
    }
}
