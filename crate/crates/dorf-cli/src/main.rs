//! Command-line front end for the Doppler radiance field pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/training
//! error.

mod cache;
mod commands;
mod config;
mod plot;
mod stages;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use dorf_core::error::{Error, Result};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "dorf",
    version,
    about = "Doppler radiance fields from Wi-Fi CSI: extraction, factorization, resampling, and activity recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-subject gesture dataset.
    Synth(commands::synth::SynthArgs),
    /// Convert or validate trial files into the canonical container.
    Ingest(commands::ingest::IngestArgs),
    /// Run extraction, factorization, and field resampling over a dataset.
    Pipeline(RunArgs),
    /// Leave-one-subject-out cross-validation over a dataset.
    Loso(LosoArgs),
    /// Render projection-trace and confusion images from artifacts.
    Report(commands::report::ReportArgs),
}

/// Flags shared by `pipeline` and `loso`; every flag overrides the config
/// file value of the same name.
#[derive(Debug, Args)]
struct RunArgs {
    /// Key-value config file (see README for the format).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    zero_pad: Option<usize>,
    #[arg(long)]
    dc_guard_hz: Option<f64>,
    /// Taper: hann or rect.
    #[arg(long)]
    taper: Option<String>,
    /// Retained delay bins per antenna (0 = all).
    #[arg(long)]
    bins_per_antenna: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// DTW band half-width in windows, or "auto".
    #[arg(long)]
    dtw_band: Option<String>,
    #[arg(long)]
    joint_factorization: Option<bool>,
    #[arg(long)]
    grid_m: Option<usize>,
    /// Restrict to one antenna index, or "all".
    #[arg(long)]
    antenna: Option<String>,
    #[arg(long)]
    kernels: Option<usize>,
    #[arg(long)]
    reduced_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    label_smoothing: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    standardize: Option<bool>,
    #[arg(long)]
    val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct LosoArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Run cross-validation folds in parallel (per-fold seeds keep the
    /// artifacts identical to a sequential run).
    #[arg(long, default_value_t = false)]
    parallel_folds: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),+ $(,)?) => {
                $(if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                })+
            };
        }
        apply!(data_dir, out_dir);
        macro_rules! apply_copy {
            ($($field:ident),+ $(,)?) => {
                $(if let Some(v) = self.$field {
                    cfg.$field = v;
                })+
            };
        }
        apply_copy!(
            seed,
            window_len,
            hop,
            zero_pad,
            dc_guard_hz,
            bins_per_antenna,
            lambda,
            gamma,
            epsilon,
            max_iters,
            joint_factorization,
            grid_m,
            kernels,
            reduced_dim,
            hidden_dim,
            num_classes,
            learning_rate,
            batch_size,
            label_smoothing,
            max_epochs,
            patience,
            weight_decay,
            standardize,
            val_fraction,
        );
        if let Some(t) = &self.taper {
            cfg.set("taper", t)?;
        }
        if let Some(b) = &self.dtw_band {
            cfg.set("dtw_band", b)?;
        }
        if let Some(a) = &self.antenna {
            cfg.set("antenna", a)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => commands::synth::run(&args),
        Command::Ingest(args) => commands::ingest::run(&args),
        Command::Pipeline(args) => commands::pipeline::run(&args.resolve()?),
        Command::Loso(args) => commands::loso::run(&args.run.resolve()?, args.parallel_folds),
        Command::Report(args) => commands::report::run(&args),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) | Error::Training { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
