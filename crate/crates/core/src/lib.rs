//! Densely connected recurrent convolutional networks (DCRN), recurrent
//! residual U-Nets and density-regression U-Nets for digital pathology,
//! built on a small reverse-mode autodiff engine.
//!
//! Layout:
//! - [`tensor`] and [`autograd`]: arrays, the op tape and gradient checking.
//! - [`nn`]: recurrent conv layers, dense blocks and the three model families.
//! - [`data`]: rasters, patching, resizing, augmentation, splits, density
//!   targets, synthetic datasets and CSV manifests.
//! - [`train`]: optimizers, schedules, the epoch loop and checkpoints.
//! - [`metrics`]: confusion metrics, ROC AUC, Dice, MSE and dot detection.
//! - [`cli`]: the `dpnet` command line.

pub mod autograd;
pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, Mode, Padding, Var};
pub use error::{Error, Result};
pub use nn::{Family, Model, ModelSpec};
pub use params::{ParamId, ParamStore};
pub use tensor::{DType, Scalar, Tensor};
