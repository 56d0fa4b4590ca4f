//! `eiqa`: command-line driver for dataset generation, two-stage training,
//! evaluation, ablations and plots.

mod commands;
mod settings;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eiqa_core::Error;

use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "eiqa", version, about = "Preference-guided debiasing for enhanced-image quality assessment")]
pub struct Cli {
    /// Flat `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    knobs: Knobs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset under `<out>/data`.
    GenData(Io),
    /// Stage 1: fit the preference encoder.
    Pretrain(Io),
    /// Stage 2 (or the whole pipeline for `joint` / `no_preference`).
    Train(TrainIo),
    /// Score a checkpoint on the test side of the configured split.
    Eval(EvalIo),
    /// Run the variant grid over several seeds and emit ablation tables.
    Ablate(AblateIo),
    /// Render plots and tables from evaluation artifacts.
    Report(ReportIo),
    #[command(hide = true)]
    AblateCell(CellIo),
}

#[derive(Debug, Args)]
pub struct Io {
    /// Output root; every command writes into a fixed sub-directory.
    #[arg(long)]
    out: PathBuf,
    /// Manifest to read (default `<out>/data/manifest.tsv`).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainIo {
    #[command(flatten)]
    io: Io,
    /// Stage-1 checkpoint (default `<out>/pretrain/preference.json`).
    #[arg(long)]
    pretrained: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalIo {
    #[command(flatten)]
    io: Io,
    /// Checkpoint to score (default `<out>/train/model.json`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateIo {
    #[command(flatten)]
    io: Io,
    /// Worker processes for independent cells.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Debug, Args)]
pub struct ReportIo {
    #[arg(long)]
    out: PathBuf,
    /// Extra `predictions.tsv` files besides `<out>/eval/predictions.tsv`.
    #[arg(long = "predictions")]
    predictions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CellIo {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    cell: String,
    #[arg(long)]
    cell_out: PathBuf,
}

/// Per-run overrides; each maps onto a settings key of the same name.
#[derive(Debug, Args, Default)]
pub struct Knobs {
    /// Master seed (falls back to the config file, then `EIQA_SEED`, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    scenes: Option<usize>,
    #[arg(long, global = true)]
    algos: Option<usize>,
    #[arg(long, global = true)]
    size: Option<usize>,
    /// standard | kfold_env | algo_disjoint
    #[arg(long, global = true)]
    protocol: Option<String>,
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    #[arg(long, global = true)]
    train_algos: Option<usize>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    fold: Option<usize>,
    /// Seeds per ablation cell.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    epochs_stage1: Option<usize>,
    #[arg(long, global = true)]
    epochs_stage2: Option<usize>,
    #[arg(long, global = true)]
    crop_size: Option<usize>,
    /// full | no_preference | preference_concat | cls_preference | joint | two_stage_no_freeze
    #[arg(long, global = true)]
    variant: Option<String>,
    /// random | algo_balanced | content_controlled
    #[arg(long, global = true)]
    stage1_sampler: Option<String>,
    #[arg(long, global = true)]
    stage2_sampler: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Serialise all work and zero wall-clock fields.
    #[arg(long, global = true)]
    strict_determinism: bool,
}

impl Knobs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        macro_rules! push {
            ($($f:ident),*) => {$(
                if let Some(x) = &self.$f {
                    v.push((stringify!($f), x.to_string()));
                }
            )*};
        }
        push!(
            seed, scenes, algos, size, protocol, test_fraction, train_algos, folds, fold, seeds, lr, batch_size,
            epochs_stage1, epochs_stage2, crop_size, variant, stage1_sampler, stage2_sampler, temperature
        );
        if self.strict_determinism {
            v.push(("strict_determinism", "true".into()));
        }
        v
    }
}

fn resolve(cli: &Cli) -> eiqa_core::Result<Settings> {
    let mut s = Settings::default();
    if let Ok(seed) = std::env::var("EIQA_SEED") {
        s.set("seed", &seed)?;
    }
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    for (k, v) in cli.knobs.pairs() {
        s.set(k, &v)?;
    }
    Ok(s)
}

/// 0 success, 2 usage or configuration, 3 numerical failure.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::Degenerate(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|settings| {
        match &cli.command {
            Command::GenData(io) => commands::gen_data(&settings, io),
            Command::Pretrain(io) => commands::pretrain(&settings, io),
            Command::Train(io) => commands::train(&settings, io),
            Command::Eval(io) => commands::eval(&settings, io),
            Command::Ablate(io) => commands::ablate(&settings, io),
            Command::Report(io) => commands::report(&settings, io),
            Command::AblateCell(io) => commands::ablate_cell(&settings, io),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
