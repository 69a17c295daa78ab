//! Command-line interface wiring the pipeline together.
//!
//! Each subcommand maps to one library entry point; flags mirror
//! `TrainConfig` keys, and flag values override the config file. Human
//! output goes to stdout, artifacts only to explicit `--out` paths.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::data::{generate_synthetic, load_dataset, save_dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::evaluator::{
    evaluate_conventional, evaluate_generalized, topk_accuracy, EvalReport,
};
use crate::inference::semantic_report;
use crate::objectives::BaselineMode;
use crate::trainer::{
    grid_search, parse_config_file, to_config_string, train, TauSetting, TrainConfig,
};

const EXIT_CODES: &str = "Exit codes:
  0  success
  2  command-line usage error
  3  missing file or I/O failure
  4  unreadable input: parse errors, dataset violations, bad checkpoints
  5  invalid configuration or missing validation split
  6  numeric failure: shape mismatch, degenerate vector, divergence";

#[derive(Parser)]
#[command(name = "relzsl", version, after_help = EXIT_CODES)]
/// Relation-preserving zero-shot learning pipeline.
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_mode_arg(s: &str) -> std::result::Result<BaselineMode, String> {
    BaselineMode::from_name(s).ok_or_else(|| format!("expected proposed, b1, b2 or b3, got {s:?}"))
}

fn parse_tau_arg(s: &str) -> std::result::Result<TauSetting, String> {
    if s == "auto" {
        Ok(TauSetting::Auto)
    } else {
        s.parse()
            .map(TauSetting::Fixed)
            .map_err(|_| format!("expected a number or `auto`, got {s:?}"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenSynth {
        /// Directory to write the dataset into.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        classes_seen: usize,
        #[arg(long)]
        classes_unseen: usize,
        #[arg(long)]
        attr_dim: usize,
        #[arg(long)]
        feat_dim: usize,
        /// Samples generated per class.
        #[arg(long)]
        per_class: usize,
        /// Standard deviation of the additive feature noise.
        #[arg(long)]
        noise: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Train a model and write a checkpoint plus a training log CSV.
    Train {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path; the log goes to `<out>.log.csv`.
        #[arg(long)]
        out: PathBuf,
        /// `key = value` config file; flags below override it.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_mode_arg)]
        mode: Option<BaselineMode>,
        /// Relation threshold, a number or `auto`.
        #[arg(long, value_parser = parse_tau_arg)]
        tau: Option<TauSetting>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Batch size.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate a checkpoint; writes `metric = value` lines plus a
    /// per-class CSV next to them.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Also run the generalized protocol (ts/tr/harmonic).
        #[arg(long)]
        generalized: bool,
        /// Also report top-k accuracy for this k.
        #[arg(long)]
        topk: Option<usize>,
        /// Report file; per-class table goes to `<out>.per_class.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank every known class against one feature row.
    Infer {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Zero-based row of features.csv to describe.
        #[arg(long)]
        feature_row: usize,
        /// Similarity threshold for tagging; defaults to the one stored
        /// in the checkpoint.
        #[arg(long)]
        tau: Option<f64>,
        /// Keep only the strongest N entries.
        #[arg(long)]
        top: Option<usize>,
        /// Optional CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full-factorial hyperparameter search scored on validation
    /// accuracy; writes per-cell CSV and the best config to `<out>.best`.
    GridSearch {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated tau values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        tau_grid: Vec<f64>,
        /// Comma-separated lambda1 values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        l1_grid: Vec<f64>,
        /// Comma-separated lambda2 values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        l2_grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses argv and runs one subcommand, translating every failure into
/// the exit codes documented in `--help`.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", path.display()))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth {
            out,
            classes_seen,
            classes_unseen,
            attr_dim,
            feat_dim,
            per_class,
            noise,
            seed,
        } => {
            let ds = generate_synthetic(&SynthConfig {
                classes_seen,
                classes_unseen,
                attr_dim,
                feat_dim,
                per_class,
                noise,
                seed,
            })?;
            save_dataset(&out, &ds)?;
            println!(
                "wrote {} samples over {} classes ({} unseen) to {}",
                ds.num_samples(),
                ds.num_classes(),
                ds.unseen.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            out,
            config,
            mode,
            tau,
            lambda1,
            lambda2,
            epochs,
            batch,
            seed,
            workers,
        } => {
            let ds = load_dataset(&data)?;
            let mut cfg: TrainConfig = parse_config_file(&config)?;
            if let Some(v) = mode {
                cfg.mode = v;
            }
            if let Some(v) = tau {
                cfg.tau = v;
            }
            if let Some(v) = lambda1 {
                cfg.lambda1 = v;
            }
            if let Some(v) = lambda2 {
                cfg.lambda2 = v;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = batch {
                cfg.batch_size = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = workers {
                cfg.workers = v;
            }
            let outcome = train(&ds, &cfg)?;
            let log = outcome.log.to_csv();
            save_checkpoint(
                &out,
                &Checkpoint {
                    network: outcome.network,
                    stats: outcome.stats,
                    tau: outcome.tau,
                },
            )?;
            std::fs::write(suffixed(&out, ".log.csv"), log)?;
            let last = outcome.log.epochs.last();
            println!(
                "trained mode={} tau={} for {} epochs; final loss {} val_acc {}; checkpoint {}",
                cfg.mode.name(),
                outcome.tau,
                outcome.log.epochs.len(),
                last.map_or(f64::NAN, |r| r.loss_total),
                last.map_or(f64::NAN, |r| r.val_acc),
                out.display()
            );
        }
        Command::Eval {
            data,
            ckpt,
            generalized,
            topk,
            out,
        } => {
            let ds = load_dataset(&data)?;
            let ckpt = load_checkpoint(&ckpt)?;
            let mut report = EvalReport {
                conventional: Some(evaluate_conventional(&ckpt.network, &ckpt.stats, &ds)?),
                ..EvalReport::default()
            };
            if generalized {
                report.generalized =
                    Some(evaluate_generalized(&ckpt.network, &ckpt.stats, &ds)?);
            }
            if let Some(k) = topk {
                report
                    .topk
                    .push((k, topk_accuracy(&ckpt.network, &ckpt.stats, &ds, k)?));
            }
            let text = report.render_text();
            std::fs::write(&out, &text)?;
            std::fs::write(suffixed(&out, ".per_class.csv"), report.render_per_class_csv())?;
            print!("{text}");
        }
        Command::Infer {
            data,
            ckpt,
            feature_row,
            tau,
            top,
            out,
        } => {
            let ds = load_dataset(&data)?;
            let ckpt = load_checkpoint(&ckpt)?;
            if feature_row >= ds.num_samples() {
                return Err(Error::DataViolation(format!(
                    "feature row {feature_row} out of range ({} samples)",
                    ds.num_samples()
                )));
            }
            let mut known: Vec<usize> = ds.seen.iter().chain(&ds.unseen).copied().collect();
            known.sort_unstable();
            let report = semantic_report(
                &ckpt.network,
                &ckpt.stats,
                ds.features.row(feature_row),
                &ds.class_embeddings,
                &ds.class_names,
                &known,
                tau.unwrap_or(ckpt.tau),
                top,
            )?;
            print!("{}", report.render_table());
            if let Some(path) = out {
                std::fs::write(path, report.render_csv())?;
            }
        }
        Command::GridSearch {
            data,
            config,
            tau_grid,
            l1_grid,
            l2_grid,
            out,
        } => {
            let ds = load_dataset(&data)?;
            let cfg = parse_config_file(&config)?;
            let outcome = grid_search(&ds, &cfg, &tau_grid, &l1_grid, &l2_grid)?;
            std::fs::write(&out, outcome.render_csv())?;
            std::fs::write(
                suffixed(&out, ".best"),
                to_config_string(&outcome.best_config(&cfg)),
            )?;
            println!(
                "best cell: tau={} lambda1={} lambda2={} val_acc={}",
                outcome.best.tau, outcome.best.lambda1, outcome.best.lambda2, outcome.best.val_acc
            );
        }
    }
    Ok(())
}
