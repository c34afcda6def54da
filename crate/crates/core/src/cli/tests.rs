use std::path::Path;

use super::*;
use crate::nn::Family;
use crate::train::{LossKind, OptimizerKind, Schedule};

const BASE: &str = "
task = classify
# comment line
data.synthetic = blobs
data.n = 12   # trailing comment
data.size = 16
";

fn parse(extra: &str) -> Result<RunConfig> {
    RunConfig::parse(&format!("{BASE}{extra}"), Path::new("."))
}

fn config_err(extra: &str) -> String {
    match parse(extra) {
        Err(Error::Config(msg)) => msg,
        other => panic!("expected a config error for {extra:?}, got {other:?}"),
    }
}

#[test]
fn defaults_follow_the_task() {
    let cfg = parse("").unwrap();
    assert_eq!(cfg.task, Task::Classify);
    assert_eq!(cfg.model.family, Family::Dcrn);
    assert_eq!(cfg.model.in_channels, 3);
    assert_eq!(cfg.train.loss, LossKind::CrossEntropy);
    assert_eq!(cfg.data.split, Split::None);
    assert!(cfg.data.test.is_none());

    let cfg = RunConfig::parse("task = detect\ndata.synthetic = dots\ndata.n = 4\ndata.test_n = 2", Path::new(".")).unwrap();
    assert_eq!(cfg.train.loss, LossKind::Mse);
    assert_eq!(cfg.model.t, 3);
    let Some(DataSource::Synthetic(test)) = &cfg.data.test else { panic!() };
    assert_eq!((test.n, test.seed), (2, 1));
}

#[test]
fn every_section_is_read() {
    let cfg = parse(
        "model.t = 3\nmodel.growth = 4\nmodel.classes = 3\ndata.split = fraction:0.8\ndata.patch = 8\n\
         data.resize = 32x16\ndata.augment = true\ndata.angles = 0, 90\ndata.balance = 5\n\
         train.optimizer = sgd\ntrain.momentum = 0\ntrain.schedule = step\ntrain.decay_period = 10\n\
         train.decay_factor = 10\ntrain.lr = 0.01\ntrain.batch_size = 32\ntrain.epochs = 30\n\
         eval.threshold = 0.4\neval.metrics = accuracy, auc\neval.roc_csv = true\noutput.dir = runs/x",
    )
    .unwrap();
    assert_eq!((cfg.model.t, cfg.model.growth, cfg.model.num_classes), (3, 4, 3));
    assert_eq!(cfg.data.split, Split::Fraction(0.8));
    assert_eq!((cfg.data.patch, cfg.data.resize), (Some(8), Some((32, 16))));
    assert_eq!(cfg.data.angles, vec![0.0, 90.0]);
    assert_eq!(cfg.train.optimizer, OptimizerKind::Sgd { momentum: 0.0 });
    assert_eq!(cfg.train.schedule, Schedule::StepDecay { period: 10, factor: 10.0 });
    assert_eq!((cfg.train.batch_size, cfg.train.epochs), (32, 30));
    assert_eq!(cfg.train.threshold, 0.4);
    assert_eq!(cfg.metrics, vec!["accuracy".to_string(), "auc".to_string()]);
    assert!(cfg.roc_csv);
    assert_eq!(cfg.output_dir.as_deref(), Some(Path::new("runs/x")));
}

#[test]
fn head_loss_task_mismatches_are_named() {
    let msg = config_err("train.loss = mse");
    assert!(msg.contains("classify") && msg.contains("Mse"), "{msg}");
    let msg = config_err("model.family = r2unet");
    assert!(msg.contains("dcrn") && msg.contains("r2unet"), "{msg}");
    let detect = "task = detect\ndata.synthetic = dots\ndata.n = 4\ntrain.loss = ce";
    assert!(matches!(RunConfig::parse(detect, Path::new(".")), Err(Error::Config(_))));
    assert!(config_err("model.density_scale = 100").contains("scale"));
}

#[test]
fn malformed_configs_are_rejected() {
    assert!(config_err("bogus.key = 1").contains("unknown key"));
    assert!(config_err("data.n = 3").contains("already set"));
    assert!(config_err("train.lr").contains("key = value"));
    assert!(config_err("train.lr = fast").contains("train.lr"));
    assert!(config_err("train.lr = -1").contains("learning rate"));
    assert!(config_err("train.batch_size = 0").contains("batch"));
    assert!(config_err("data.split = fraction:1.5").contains("outside"));
    assert!(config_err("data.manifest = nowhere.csv").contains("not both"));
    assert!(config_err("train.optimizer = rmsprop").contains("rmsprop"));
    let missing = "task = segment\ndata.manifest = nowhere/manifest.csv";
    let err = RunConfig::parse(missing, Path::new("/nonexistent")).unwrap_err();
    assert!(err.to_string().contains("does not exist"), "{err}");
    assert!(RunConfig::parse("data.synthetic = dots", Path::new(".")).is_err());
}

#[test]
fn pipeline_orders_stages() {
    let cfg = parse("data.patch = 8\ndata.split = fraction:0.75\ndata.augment = true\ndata.angles = 0,90").unwrap();
    let (train, test) = prepare_data(&cfg).unwrap();
    // 12 images x 4 patches, 36 / 12 split, training side rotated twice
    assert_eq!(train.len(), 72);
    assert_eq!(test.unwrap().len(), 12);
    assert!(train.iter().all(|r| r.image.width() == 8));

    let cfg = parse("data.resize = 24\ndata.patch = 8\ndata.balance = 10").unwrap();
    let (train, test) = prepare_data(&cfg).unwrap();
    assert!(test.is_none());
    assert!(train.len() <= 20);
    assert!(train.iter().all(|r| r.image.width() == 8));
}

#[test]
fn patient_split_holds_out_one_patient() {
    let cfg = RunConfig::parse(
        "task = segment\ndata.synthetic = circles\ndata.n = 22\ndata.size = 16\ndata.patients = 11\ndata.split = patient:patient03",
        Path::new("."),
    )
    .unwrap();
    let (train, test) = prepare_data(&cfg).unwrap();
    let test = test.unwrap();
    assert_eq!((train.len(), test.len()), (20, 2));
    assert!(test.iter().all(|r| r.patient_id == "patient03"));
}

#[test]
fn synth_flag_parses() {
    let s = parse_synth("dots, 10, 64, 22", 2, 10).unwrap();
    assert_eq!((s.kind, s.n, s.size, s.seed), (SynthKind::Dots, 10, 64, 22));
    assert!(parse_synth("dots,10,64", 2, 10).is_err());
    assert!(parse_synth("squares,1,64,1", 2, 10).is_err());
}

#[test]
fn cli_parses_global_flags() {
    let cli = Cli::try_parse_from(["dpnet", "train", "a.cfg", "--seed", "4", "--precision", "f64"]).unwrap();
    assert_eq!((cli.seed, cli.precision), (Some(4), Precision::F64));
    assert!(Cli::try_parse_from(["dpnet", "eval", "--checkpoint", "m.dpnc"]).is_err());
    assert!(Cli::try_parse_from(["dpnet", "--precision", "f16", "synth"]).is_err());
}
