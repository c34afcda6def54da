//! The `dpnet` command line: config-driven training plus evaluation,
//! patching, synthetic data and gradient checks.
//!
//! Run configs are flat `section.key = value` files; `#` starts a comment.
//! See `examples/*.cfg` in the crate for every key in use.

mod commands;
mod config;
#[cfg(test)]
mod tests;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{
    cmd_eval, cmd_gradcheck, cmd_patches, cmd_synth, cmd_train, counts_csv, load_source, prepare_data, preprocess,
    CountRow, EvalArgs, EvalRun, GradcheckArgs, TrainOptions, TrainRun,
};
pub use config::{DataConfig, DataSource, RunConfig, Split};

use crate::autograd::Fault;
use crate::data::{SynthKind, SynthSpec, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::nn::Family;
use crate::train::{EvalOptions, Task};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Parser)]
#[command(name = "dpnet", version, about = "Recurrent and dense conv nets for digital pathology")]
pub struct Cli {
    /// Seed for training (overrides train.seed), synthesis and gradient checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for convolutions and image loading.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a run config.
    Train {
        config: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        manifest: Option<PathBuf>,
        /// Synthetic set as `kind,n,size,seed`.
        #[arg(long)]
        synth: Option<String>,
        /// Classes for synthetic blobs.
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        patients: usize,
        #[arg(long)]
        patch: Option<usize>,
        /// Square resize applied before patching.
        #[arg(long)]
        resize: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long)]
        threshold: Option<f64>,
        /// Detection match radius in pixels.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        peak_min_height: Option<f64>,
        #[arg(long)]
        peak_min_distance: Option<f64>,
        #[arg(long)]
        roc_csv: Option<PathBuf>,
        #[arg(long)]
        counts_csv: Option<PathBuf>,
        /// Also write the metrics text here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut every manifest image into non-overlapping square patches.
    Patches {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset with its manifest.
    Synth {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        patients: usize,
    },
    /// Finite-difference gradient check of a freshly built model.
    Gradcheck {
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 2)]
        t: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long)]
        in_channels: Option<usize>,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Check this many random entries per tensor instead of all.
        #[arg(long)]
        sampled: Option<usize>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn parse_synth(s: &str, classes: usize, patients: usize) -> Result<SynthSpec> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [kind, n, size, seed] = parts[..] else {
        return Err(Error::Config(format!("--synth {s:?} is not kind,n,size,seed")));
    };
    let num = |v: &str| v.parse::<u64>().map_err(|_| Error::Config(format!("--synth: {v:?} is not an integer")));
    let mut spec = SynthSpec::new(kind.parse::<SynthKind>()?, num(n)? as usize, num(size)? as usize, num(seed)?);
    spec.classes = classes;
    spec.patients = patients;
    Ok(spec)
}

/// Executes one command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Train { config, out, resume, epochs } => {
            let run = cmd_train(&config, &TrainOptions { out, resume, seed: cli.seed, epochs, precision: cli.precision })?;
            print!("{}", run.metrics.to_text());
            println!("outputs written to {}", run.out_dir.display());
        }
        Command::Eval {
            checkpoint,
            manifest,
            synth,
            classes,
            patients,
            patch,
            resize,
            sigma,
            threshold,
            radius,
            peak_min_height,
            peak_min_distance,
            roc_csv,
            counts_csv: counts_path,
            out,
        } => {
            let data = match (manifest, synth) {
                (Some(m), _) => DataSource::Manifest(m),
                (None, Some(s)) => DataSource::Synthetic(parse_synth(&s, classes, patients)?),
                (None, None) => return Err(Error::Config("eval needs --manifest or --synth".into())),
            };
            let d = EvalOptions::default();
            let opts = EvalOptions {
                threshold: threshold.unwrap_or(d.threshold),
                match_radius: radius.unwrap_or(d.match_radius),
                peak_min_height: peak_min_height.unwrap_or(d.peak_min_height),
                peak_min_distance: peak_min_distance.unwrap_or(d.peak_min_distance),
                ..d
            };
            let args = EvalArgs {
                checkpoint,
                data,
                resize: resize.map(|n| (n, n)),
                patch,
                sigma,
                opts,
                roc_csv,
                out,
                counts_csv: counts_path,
            };
            let run = cmd_eval(&args, cli.precision)?;
            if run.task == Task::Detect {
                print!("{}", counts_csv(&run.counts));
            }
            print!("{}", run.metrics.to_text());
        }
        Command::Patches { input, size, out } => {
            let (manifest, n) = cmd_patches(&input, size, &out)?;
            println!("{n} patches, manifest {}", manifest.display());
        }
        Command::Synth { kind, n, size, out, classes, patients } => {
            let mut spec = SynthSpec::new(kind.parse()?, n, size, cli.seed.unwrap_or(0));
            spec.classes = classes;
            spec.patients = patients;
            let manifest = cmd_synth(&spec, &out)?;
            println!("{n} samples, manifest {}", manifest.display());
        }
        Command::Gradcheck { family, t, size, in_channels, tolerance, sampled, inject_fault } => {
            let args = GradcheckArgs {
                family: family.parse::<Family>()?,
                t,
                size,
                in_channels,
                tolerance,
                sampled,
                seed: cli.seed.unwrap_or(0),
                fault: inject_fault.then_some(Fault::ConvWeightGradTransposed),
            };
            let report = cmd_gradcheck(&args)?;
            print!("{}", report.to_table());
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            println!("{verdict}: max relative error {:.3e} (tolerance {:.1e})", report.max_rel_error(), tolerance);
            if !report.passed() {
                return Ok(3);
            }
        }
    }
    Ok(0)
}
