use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dpnet_ffi::*;

fn last_error() -> String {
    let p = dpn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn build(spec: &str, seed: u64) -> *mut DpnModel {
    let spec = CString::new(spec).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dpn_model_build(spec.as_ptr(), seed, &mut m) }, DpnStatus::Ok);
    assert!(!m.is_null());
    m
}

fn forward(m: *const DpnModel, x: &[f32], shape: [usize; 4]) -> Vec<f32> {
    let [n, c, h, w] = shape;
    let mut len = 0;
    assert_eq!(unsafe { dpn_model_output_len(m, n, c, h, w, &mut len) }, DpnStatus::Ok);
    let mut y = vec![0f32; len];
    assert_eq!(unsafe { dpn_model_forward(m, x.as_ptr(), n, c, h, w, y.as_mut_ptr(), y.len()) }, DpnStatus::Ok);
    y
}

#[test]
fn model_lifecycle_round_trips_through_a_file() {
    let m = build("family=dcrn;in=3;classes=3", 5);
    let mut count = 0;
    assert_eq!(unsafe { dpn_model_param_count(m, &mut count) }, DpnStatus::Ok);
    assert_eq!(count, dpnet::Model::<f32>::build(&dpnet::ModelSpec::dcrn(3, 3), 5).unwrap().param_count());

    let x: Vec<f32> = (0..2 * 3 * 16 * 16).map(|i| ((i * 37) % 101) as f32 / 101.0).collect();
    let y = forward(m, &x, [2, 3, 16, 16]);
    assert_eq!(y.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.dpnc").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dpn_model_save(m, path.as_ptr()) }, DpnStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { dpn_model_load(path.as_ptr(), &mut loaded) }, DpnStatus::Ok);
    assert_eq!(forward(loaded, &x, [2, 3, 16, 16]), y);

    let mut needed = 0;
    assert_eq!(unsafe { dpn_model_spec(loaded, ptr::null_mut(), 0, &mut needed) }, DpnStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    assert_eq!(unsafe { dpn_model_spec(loaded, buf.as_mut_ptr(), buf.len(), &mut needed) }, DpnStatus::Ok);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert!(text.starts_with("family=dcrn;in=3;classes=3"), "{text}");

    unsafe {
        dpn_model_free(m);
        dpn_model_free(loaded);
        dpn_model_free(ptr::null_mut());
    }
}

#[test]
fn density_output_is_unscaled() {
    let spec = dpnet::ModelSpec::udnet(1).with_density_scale(100);
    let m = build(&spec.to_string(), 1);
    let x: Vec<f32> = (0..16 * 16).map(|i| (i % 7) as f32 / 7.0).collect();
    let y = forward(m, &x, [1, 1, 16, 16]);
    let model = dpnet::Model::<f32>::build(&spec, 1).unwrap();
    let raw = model.predict(&dpnet::Tensor::new(vec![1, 1, 16, 16], x).unwrap()).unwrap();
    for (a, b) in y.iter().zip(raw.data()) {
        assert_eq!(*a, b / 100.0);
    }
    unsafe { dpn_model_free(m) };
}

#[test]
fn errors_map_to_status_codes() {
    let bad = CString::new("family=resnet").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { dpn_model_build(bad.as_ptr(), 0, &mut m) }, DpnStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("resnet"));

    assert_eq!(unsafe { dpn_model_build(ptr::null(), 0, &mut m) }, DpnStatus::NullPointer);
    assert!(last_error().contains("spec"));

    let missing = CString::new("/nonexistent/model.dpnc").unwrap();
    assert_eq!(unsafe { dpn_model_load(missing.as_ptr(), &mut m) }, DpnStatus::Io);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.dpnc");
    std::fs::write(&junk, b"DPNC but not really").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dpn_model_load(junk.as_ptr(), &mut m) }, DpnStatus::Checkpoint);

    let unet = build("family=r2unet;in=1", 0);
    let mut len = 0;
    assert_eq!(unsafe { dpn_model_output_len(unet, 1, 1, 12, 12, &mut len) }, DpnStatus::Shape);
    let x = vec![0f32; 64];
    let mut y = vec![0f32; 10];
    let status = unsafe { dpn_model_forward(unet, x.as_ptr(), 1, 1, 8, 8, y.as_mut_ptr(), y.len()) };
    assert_eq!(status, DpnStatus::BufferTooSmall);
    unsafe { dpn_model_free(unet) };
}

#[test]
fn metrics_match_the_library() {
    let pred = [1u32, 0, 1, 1, 2];
    let truth = [1u32, 1, 0, 1, 2];
    let mut c = DpnConfusion::default();
    assert_eq!(unsafe { dpn_confusion(pred.as_ptr(), truth.as_ptr(), 5, 1, &mut c) }, DpnStatus::Ok);
    assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 1, 1, 1));
    assert_eq!(c.f1, 4.0 / 6.0);

    let mut v = 0.0;
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    assert_eq!(unsafe { dpn_roc_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut v) }, DpnStatus::Ok);
    assert_eq!(v, 0.75);

    let a = [1.0, 1.0, 0.0, 0.0];
    let b = [1.0, 0.0, 1.0, 0.0];
    assert_eq!(unsafe { dpn_dice(a.as_ptr(), b.as_ptr(), 4, &mut v) }, DpnStatus::Ok);
    assert_eq!(v, 0.5);
    assert_eq!(unsafe { dpn_mse(a.as_ptr(), b.as_ptr(), 4, &mut v) }, DpnStatus::Ok);
    assert_eq!(v, 0.5);
    assert_eq!(unsafe { dpn_dice(a.as_ptr(), b.as_ptr(), 0, &mut v) }, DpnStatus::Ok);
    assert_eq!(v, 1.0);
    assert_eq!(unsafe { dpn_mse(a.as_ptr(), ptr::null(), 4, &mut v) }, DpnStatus::NullPointer);
}

#[test]
fn density_target_sums_to_dot_count() {
    let dots = [10.0, 12.0, 20.5, 7.0, 3.0, 28.0];
    let mut map = vec![0.0; 32 * 32];
    let status = unsafe { dpn_density_target(dots.as_ptr(), 3, 32, 32, 2.0, map.as_mut_ptr(), map.len()) };
    assert_eq!(status, DpnStatus::Ok);
    let expect = dpnet::data::density_target(&[(10.0, 12.0), (20.5, 7.0), (3.0, 28.0)], 32, 32, 2.0).unwrap();
    assert_eq!(map, expect.values);
    let status = unsafe { dpn_density_target(dots.as_ptr(), 3, 32, 32, 0.0, map.as_mut_ptr(), map.len()) };
    assert_eq!(status, DpnStatus::InvalidArgument);
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dpnet.h")).unwrap();
    for name in [
        "typedef struct DpnModel DpnModel",
        "DPN_STATUS_OK = 0",
        "DPN_STATUS_PANIC",
        "dpn_model_build",
        "dpn_model_forward",
        "dpn_model_free",
        "dpn_last_error",
        "dpn_roc_auc",
        "dpn_density_target",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, "#include \"dpnet.h\"\nint main(void) { DpnModel *m = 0; dpn_model_free(m); return DPN_STATUS_OK; }\n").unwrap();
    let out = Command::new(cc)
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
