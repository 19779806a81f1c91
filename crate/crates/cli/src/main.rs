//! `mrnet`: ingest EDF recordings, train and apply the staging network,
//! correct predicted sequences, score them and draw hypnograms.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mrnet", version, about = "Single-channel EEG sleep staging")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// `key = value` config file (default: $MRNET_CONFIG if set).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set msc.r=3.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert PSG/hypnogram EDF pairs into epoch stores.
    Ingest {
        #[arg(long)]
        edf: PathBuf,
        #[arg(long)]
        channel: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Minutes of wake kept around the sleep period.
        #[arg(long, value_name = "MINUTES")]
        trim_wake: Option<f64>,
    },
    /// Write per-record contiguous test spans for k-fold evaluation.
    Folds {
        #[arg(long)]
        stores: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on epoch stores.
    Train {
        #[arg(long)]
        stores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train on everything outside this fold's test spans and validate on them.
        #[arg(long)]
        fold: Option<usize>,
        /// Base architecture before `--set` overrides.
        #[arg(long, value_enum, default_value = "full")]
        preset: commands::Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write per-record confidence CSVs.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        stores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply sequential correction to predicted confidences.
    Correct {
        #[arg(long)]
        predictions: PathBuf,
        /// Stores whose hypnograms estimate the transition matrix; the
        /// record being corrected is always left out.
        #[arg(long, required_unless_present = "matrix")]
        train_stores: Option<PathBuf>,
        /// Use a fixed processed transition matrix instead of fitting one.
        #[arg(long, conflicts_with = "train_stores")]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against stored labels.
    Eval {
        #[arg(long)]
        stores: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        corrected: Option<PathBuf>,
        /// Score only this fold's held-out span of each record.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic records.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        records: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write EDF pairs instead of epoch stores.
        #[arg(long)]
        edf: bool,
    },
    /// Raw versus corrected accuracy on jittered synthetic hypnograms.
    Bench {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw hypnograms (SVG and text) per record.
    Plot {
        #[arg(long)]
        stores: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        corrected: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> mrnet::Result<()> {
    let cfg = cli.config;
    match cli.command {
        Command::Ingest {
            edf,
            channel,
            out,
            trim_wake,
        } => {
            let mut extra = vec![];
            if let Some(c) = channel {
                extra.push(("ingest.channel".into(), c));
            }
            if let Some(m) = trim_wake {
                extra.push(("ingest.trim_wake_minutes".into(), m.to_string()));
            }
            commands::ingest(&cfg.load(None, extra)?, &edf, &out)
        }
        Command::Folds { stores, k, out } => {
            let extra = k.map(|k| ("folds.k".into(), k.to_string())).into_iter().collect();
            commands::folds(&cfg.load(None, extra)?, &stores, &out)
        }
        Command::Train {
            stores,
            out,
            fold,
            preset,
            epochs,
            seed,
        } => {
            let mut extra = vec![];
            if let Some(e) = epochs {
                extra.push(("train.epochs".into(), e.to_string()));
            }
            if let Some(s) = seed {
                extra.push(("train.seed".into(), s.to_string()));
            }
            commands::train(&cfg.load(Some(preset), extra)?, &stores, &out, fold)
        }
        Command::Predict { model, stores, out } => commands::predict(&cfg.load(None, vec![])?, &model, &stores, &out),
        Command::Correct {
            predictions,
            train_stores,
            matrix,
            out,
        } => commands::correct(
            &cfg.load(None, vec![])?,
            &predictions,
            train_stores.as_deref(),
            matrix.as_deref(),
            &out,
        ),
        Command::Eval {
            stores,
            predictions,
            corrected,
            fold,
            out,
        } => commands::eval(&cfg.load(None, vec![])?, &stores, &predictions, corrected.as_deref(), fold, &out),
        Command::Synth {
            out,
            records,
            seed,
            edf,
        } => {
            let extra = seed.map(|s| ("synth.seed".into(), s.to_string())).into_iter().collect();
            commands::synth(&cfg.load(None, extra)?, &out, records, edf)
        }
        Command::Bench { out, seed } => {
            let extra = seed.map(|s| ("bench.seed".into(), s.to_string())).into_iter().collect();
            commands::bench(&cfg.load(None, extra)?, out.as_deref())
        }
        Command::Plot {
            stores,
            predictions,
            corrected,
            out,
        } => commands::plot(&cfg.load(None, vec![])?, &stores, predictions.as_deref(), corrected.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
