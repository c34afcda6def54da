//! C interface to dpnet: build, load, save and run models through an opaque
//! handle, plus the evaluation metrics and density targets.
//!
//! Every fallible function returns a [`DpnStatus`]; on failure the message is
//! available from [`dpn_last_error`] on the same thread. Panics never cross
//! the boundary and are reported as [`DpnStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use dpnet::metrics;
use dpnet::nn::Head;
use dpnet::train::{load_checkpoint, save_checkpoint};
use dpnet::{Error, Model, ModelSpec, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Checkpoint = 5,
    NonFinite = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque model handle. Create with [`dpn_model_build`] or
/// [`dpn_model_load`], release with [`dpn_model_free`].
pub struct DpnModel {
    model: Model<f32>,
}

/// Confusion counts for one positive class.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DpnConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> DpnStatus {
    match e {
        Error::Shape { .. } | Error::NonScalarLoss(_) => DpnStatus::Shape,
        Error::Io { .. } | Error::Image { .. } => DpnStatus::Io,
        Error::Checkpoint(_) => DpnStatus::Checkpoint,
        Error::NonFinite(_) | Error::Diverged { .. } => DpnStatus::NonFinite,
        _ => DpnStatus::InvalidArgument,
    }
}

struct Fail(DpnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DpnStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DpnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DpnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(DpnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null(what)),
        (false, n) => Ok(slice::from_raw_parts(p, n)),
    }
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn model_arg<'a>(p: *const DpnModel) -> Result<&'a DpnModel, Fail> {
    p.as_ref().ok_or_else(|| null("model"))
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dpn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dpn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a freshly initialized model from its text spec, e.g.
/// `family=udnet;in=1;t=3`. Omitted keys take the family defaults.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_build(spec: *const c_char, seed: u64, out: *mut *mut DpnModel) -> DpnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec: ModelSpec = str_arg(spec, "spec")?.parse()?;
        let model = Model::build(&spec, seed)?;
        *out = Box::into_raw(Box::new(DpnModel { model }));
        Ok(())
    })
}

/// Loads a checkpoint written by the CLI or [`dpn_model_save`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_load(path: *const c_char, out: *mut *mut DpnModel) -> DpnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let (model, _) = load_checkpoint::<f32>(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(DpnModel { model }));
        Ok(())
    })
}

/// Writes an inference checkpoint (no optimizer state).
///
/// # Safety
/// `model` must come from this library and `path` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_save(model: *const DpnModel, path: *const c_char) -> DpnStatus {
    guard(|| {
        let m = model_arg(model)?;
        save_checkpoint(str_arg(path, "path")?, &m.model, None)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_free(model: *mut DpnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Total number of trainable parameters.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_param_count(model: *const DpnModel, out: *mut usize) -> DpnStatus {
    guard(|| {
        *out_arg(out, "out")? = model_arg(model)?.model.param_count();
        Ok(())
    })
}

/// Writes the model's text spec into `buf` (NUL-terminated). `needed`
/// receives the full length including the terminator.
///
/// # Safety
/// `buf` must hold `cap` bytes (may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn dpn_model_spec(model: *const DpnModel, buf: *mut c_char, cap: usize, needed: *mut usize) -> DpnStatus {
    guard(|| {
        let text = model_arg(model)?.model.spec().to_string();
        let n = text.len() + 1;
        *out_arg(needed, "needed")? = n;
        if cap < n {
            return Err(Fail(DpnStatus::BufferTooSmall, format!("spec needs {n} bytes, buffer has {cap}")));
        }
        ptr::copy_nonoverlapping(text.as_ptr().cast(), buf, text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Number of output values for an `[n, c, h, w]` input: `n * classes` for
/// the classifier, `n * h * w` for the pixel-wise heads.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_output_len(
    model: *const DpnModel,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    out: *mut usize,
) -> DpnStatus {
    guard(|| {
        let m = &model_arg(model)?.model;
        m.check_input(&[n, c, h, w])?;
        *out_arg(out, "out")? = match m.head() {
            Head::Softmax => n * m.spec().num_classes,
            _ => n * h * w,
        };
        Ok(())
    })
}

/// Eval-mode forward pass on a row-major `[n, c, h, w]` batch. Writes class
/// logits, foreground probabilities or a density map (in object counts per
/// pixel) depending on the family.
///
/// # Safety
/// `input` must hold `n*c*h*w` floats and `output` `output_len` floats.
#[no_mangle]
pub unsafe extern "C" fn dpn_model_forward(
    model: *const DpnModel,
    input: *const f32,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    output: *mut f32,
    output_len: usize,
) -> DpnStatus {
    guard(|| {
        let m = &model_arg(model)?.model;
        let data = slice_arg(input, n * c * h * w, "input")?;
        let x = Tensor::new(vec![n, c, h, w], data.to_vec())?;
        let y = m.predict(&x)?;
        if y.numel() > output_len {
            return Err(Fail(DpnStatus::BufferTooSmall, format!("output needs {} floats, buffer has {output_len}", y.numel())));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        let dst = slice::from_raw_parts_mut(output, y.numel());
        let scale = m.spec().density_scale as f32;
        for (d, &v) in dst.iter_mut().zip(y.data()) {
            *d = if m.head() == Head::LinearDensity { v / scale } else { v };
        }
        Ok(())
    })
}

/// Confusion counts and derived ratios of `pred` against `truth` for class
/// `positive`. Ratios with a zero denominator are 0.
///
/// # Safety
/// Both arrays must hold `len` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpn_confusion(
    pred: *const u32,
    truth: *const u32,
    len: usize,
    positive: u32,
    out: *mut DpnConfusion,
) -> DpnStatus {
    guard(|| {
        let to_usize = |s: &[u32]| s.iter().map(|&v| v as usize).collect::<Vec<_>>();
        let pred = to_usize(slice_arg(pred, len, "pred")?);
        let truth = to_usize(slice_arg(truth, len, "truth")?);
        let c = metrics::confusion_metrics(&pred, &truth, positive as usize)?;
        *out_arg(out, "out")? = DpnConfusion {
            tp: c.tp,
            fp: c.fp,
            tn: c.tn,
            fn_: c.fn_,
            precision: c.precision(),
            recall: c.recall(),
            accuracy: c.accuracy(),
            f1: c.f1(),
        };
        Ok(())
    })
}

/// Area under the ROC curve; ties count one half. `labels` are 0 or 1.
///
/// # Safety
/// Both arrays must hold `len` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpn_roc_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> DpnStatus {
    guard(|| {
        let scores = slice_arg(scores, len, "scores")?;
        let labels: Vec<bool> = slice_arg(labels, len, "labels")?.iter().map(|&l| l != 0).collect();
        *out_arg(out, "out")? = metrics::roc_auc(scores, &labels)?.auc;
        Ok(())
    })
}

/// Dice coefficient of two binary masks; two empty masks score 1.
///
/// # Safety
/// Both arrays must hold `len` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpn_dice(pred: *const f64, truth: *const f64, len: usize, out: *mut f64) -> DpnStatus {
    guard(|| {
        *out_arg(out, "out")? = metrics::dice(slice_arg(pred, len, "pred")?, slice_arg(truth, len, "truth")?)?;
        Ok(())
    })
}

/// Mean squared error.
///
/// # Safety
/// Both arrays must hold `len` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dpn_mse(pred: *const f64, truth: *const f64, len: usize, out: *mut f64) -> DpnStatus {
    guard(|| {
        *out_arg(out, "out")? = metrics::mse_metric(slice_arg(pred, len, "pred")?, slice_arg(truth, len, "truth")?)?;
        Ok(())
    })
}

/// Density target for `n_dots` annotations given as interleaved `x, y`
/// pixel coordinates. Writes `width * height` row-major values.
///
/// # Safety
/// `dots` must hold `2 * n_dots` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn dpn_density_target(
    dots: *const f64,
    n_dots: usize,
    width: usize,
    height: usize,
    sigma: f64,
    out: *mut f64,
    out_len: usize,
) -> DpnStatus {
    guard(|| {
        let flat = slice_arg(dots, 2 * n_dots, "dots")?;
        let dots: Vec<(f64, f64)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let map = dpnet::data::density_target(&dots, width, height, sigma)?;
        if out_len < map.values.len() {
            return Err(Fail(DpnStatus::BufferTooSmall, format!("density needs {} values, buffer has {out_len}", map.values.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, map.values.len()).copy_from_slice(&map.values);
        Ok(())
    })
}
