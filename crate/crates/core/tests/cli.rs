use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpnet::cli::{cmd_train, RunConfig, TrainOptions};
use dpnet::data::{load_manifest, read_dots_csv, write_dataset, RasterImage, SampleRecord, Target};

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn dpnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn dpnet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn metric(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .parse()
        .unwrap()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn every_example_config_validates() {
    let mut n = 0;
    for entry in fs::read_dir(examples()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 8, "only {n} configs");
}

#[test]
fn bundled_config_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = examples().join("blobs_dcrn.cfg");
    let o = dpnet(&["train", s(&cfg), "--out", s(dir.path()), "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["model.dpnc", "history.csv", "metrics.txt", "roc.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let history = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,lr,train_loss,train_metric,val_metric\n1,0.01,"));
    let metrics = fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    let keys: Vec<&str> = metrics.lines().map(|l| l.split(" = ").next().unwrap()).collect();
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    assert_eq!(keys, sorted);
    assert!(keys.contains(&"accuracy") && keys.contains(&"auc") && keys.contains(&"train_accuracy"));
    assert_eq!(metric(&metrics, "samples"), 100.0);
}

#[test]
fn loss_mismatch_exits_2_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(examples().join("blobs_dcrn.cfg")).unwrap().replace("cross_entropy", "mse");
    let cfg = write_cfg(dir.path(), "bad.cfg", &text);
    let out = dir.path().join("out");
    let o = dpnet(&["train", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("classify") && err.contains("Mse"), "{err}");
    assert!(!out.exists());
}

const TINY_SEGMENT: &str = "
task = segment
model.channels = 4,8,16,32
data.synthetic = circles
data.size = 16
data.n = 6
data.seed = 1
data.test_n = 3
data.test_seed = 2
train.optimizer = adam
train.lr = 1e-3
train.batch_size = 2
train.epochs = 2
train.seed = 9
";

#[test]
fn eval_reproduces_final_validation_metric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seg.cfg", TINY_SEGMENT);
    let out = dir.path().join("run");
    let run = cmd_train(&cfg, &TrainOptions { out: Some(out.clone()), ..TrainOptions::default() }).unwrap();
    let last = run.history.last().unwrap().val_metric.unwrap();
    let ckpt = out.join("model.dpnc");
    let o = dpnet(&["eval", "--checkpoint", s(&ckpt), "--synth", "circles,3,16,2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(metric(&stdout(&o), "dice"), last);
    assert_eq!(run.metrics.get("dice"), Some(last));
}

#[test]
fn eval_on_empty_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seg.cfg", TINY_SEGMENT);
    let out = dir.path().join("run");
    cmd_train(&cfg, &TrainOptions { out: Some(out.clone()), epochs: Some(1), ..TrainOptions::default() }).unwrap();
    let manifest = write_dataset(&[], dir.path().join("empty")).unwrap();
    let o = dpnet(&["eval", "--checkpoint", s(&out.join("model.dpnc")), "--manifest", s(&manifest)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));

    let blobs = dpnet(&["eval", "--checkpoint", s(&out.join("model.dpnc")), "--synth", "blobs,2,16,0"]);
    assert_eq!(blobs.status.code(), Some(2), "{}", stderr(&blobs));
}

#[test]
fn detect_eval_reports_counts_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "dots.cfg",
        "task = detect\nmodel.channels = 4,8,16,32\nmodel.t = 1\nmodel.density_scale = 100\n\
         data.synthetic = dots\ndata.size = 32\ndata.n = 4\ntrain.batch_size = 2\ntrain.epochs = 1\ntrain.val_fraction = 0\n",
    );
    let out = dir.path().join("run");
    cmd_train(&cfg, &TrainOptions { out: Some(out.clone()), ..TrainOptions::default() }).unwrap();
    let data = dir.path().join("data");
    assert_eq!(dpnet(&["synth", "--kind", "dots", "--n", "5", "--size", "32", "--seed", "4", "--out", s(&data)]).status.code(), Some(0));
    let counts = dir.path().join("counts.csv");
    let o = dpnet(&[
        "eval",
        "--checkpoint",
        s(&out.join("model.dpnc")),
        "--manifest",
        s(&data.join("manifest.csv")),
        "--radius",
        "4",
        "--counts-csv",
        s(&counts),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&counts).unwrap();
    let records = load_manifest(data.join("manifest.csv")).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for (row, rec) in rows.iter().zip(&records) {
        let Target::Dots(d) = &rec.target else { panic!() };
        assert_eq!(row[1], d.len() as f64);
        assert_eq!(row[3], row[2] - row[1]);
    }
    let report = stdout(&o);
    for key in ["count_mae", "count_within", "f1", "precision", "recall", "mse"] {
        metric(&report, key);
    }
}

#[test]
fn exploding_learning_rate_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "boom.cfg",
        "task = classify\nmodel.blocks = 1\nmodel.layers = 1\ndata.synthetic = blobs\ndata.size = 16\ndata.n = 8\n\
         train.optimizer = sgd\ntrain.lr = 1e30\ntrain.batch_size = 2\ntrain.epochs = 3\ntrain.val_fraction = 0\n",
    );
    let o = dpnet(&["train", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));
}

#[test]
fn patches_follow_grid_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let image = RasterImage::from_fn(1344, 1024, 3, |c, y, x| ((x * 7 + y * 3 + c) % 256) as f64 / 255.0).unwrap();
    let mask = RasterImage::from_fn(1344, 1024, 1, |_, y, x| f64::from(u8::from((x / 10 + y / 10) % 2 == 0))).unwrap();
    let rec = SampleRecord { image, target: Target::Mask(mask), patient_id: "p7".into(), source_path: "slide".into() };
    let input = write_dataset(&[rec], dir.path().join("in")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = dpnet(&["patches", "--input", s(&input), "--size", "64", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("336 patches"));
    }
    assert_eq!(fs::read_dir(a.join("images")).unwrap().count(), 336);
    assert_eq!(fs::read_dir(a.join("masks")).unwrap().count(), 336);
    for sub in ["manifest.csv", "images/00000.png", "images/00335.png", "masks/00200.png"] {
        assert_eq!(fs::read(a.join(sub)).unwrap(), fs::read(b.join(sub)).unwrap(), "{sub}");
    }
    let patches = load_manifest(a.join("manifest.csv")).unwrap();
    let p = &patches[21 + 1];
    assert_eq!(p.patient_id, "p7");
    // row 1, col 1 of a 21-wide grid
    let Target::Mask(m) = &p.target else { panic!() };
    assert_eq!(p.image.get(0, 0, 0), ((64 * 7 + 64 * 3) % 256) as f64 / 255.0);
    assert_eq!(m.get(0, 0, 0), f64::from(u8::from((64 / 10 + 64 / 10) % 2 == 0)));
}

#[test]
fn synth_is_reproducible_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = dpnet(&["--seed", "5", "synth", "--kind", "dots", "--n", "4", "--size", "32", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for i in 0..4 {
        let img = format!("images/{i:05}.png");
        let dots = format!("dots/{i:05}.csv");
        assert_eq!(fs::read(a.join(&img)).unwrap(), fs::read(b.join(&img)).unwrap());
        assert_eq!(fs::read(a.join(&dots)).unwrap(), fs::read(b.join(&dots)).unwrap());
        let spots = read_dots_csv(a.join(&dots)).unwrap();
        assert!(!spots.is_empty());
        let image = RasterImage::load_png(a.join(&img)).unwrap();
        for (x, y) in spots {
            // a rendered spot is brighter at its center than the image mean
            let v = image.get(0, y.round() as usize, x.round() as usize);
            let mean = image.data().iter().sum::<f64>() / image.data().len() as f64;
            assert!(v > mean, "spot at ({x}, {y})");
        }
    }
    let c = dir.path().join("c");
    assert_eq!(dpnet(&["synth", "--kind", "circles", "--n", "3", "--size", "32", "--out", s(&c)]).status.code(), Some(0));
    for r in load_manifest(c.join("manifest.csv")).unwrap() {
        let Target::Mask(m) = r.target else { panic!() };
        assert!(m.is_binary());
    }
    assert_eq!(dpnet(&["synth", "--kind", "squares", "--n", "3", "--out", s(&c)]).status.code(), Some(2));
}

#[test]
fn gradcheck_passes_and_catches_a_fault() {
    for family in ["dcrn", "r2unet", "udnet"] {
        let o = dpnet(&["gradcheck", "--family", family, "--t", "2", "--size", "16", "--sampled", "2"]);
        let table = stdout(&o);
        assert_eq!(o.status.code(), Some(0), "{family}\n{table}{}", stderr(&o));
        assert!(table.contains("input") && table.contains("PASS: max relative error"));
        assert!(!table.contains("FAIL"));
    }
    let o = dpnet(&["gradcheck", "--family", "r2unet", "--t", "1", "--size", "16", "--sampled", "4", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}
