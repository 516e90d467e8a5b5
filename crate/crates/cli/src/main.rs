//! `gridcast`: synthesize data, test spatial autocorrelation, train, forecast
//! and evaluate. Every command reads one JSON config (`--config`) and applies
//! flag overrides on top of it.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use gridcast::model::{HeadKind, LossMode};
use gridcast::pipeline::{
    cmd_evaluate, cmd_forecast, cmd_moran, cmd_synth, cmd_train, PipelineConfig, FORECAST_FILE, METRICS_FILE,
    MORAN_FILE,
};

#[derive(Parser, Debug)]
#[command(name = "gridcast", version, about = "Outage count forecasting pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Pipeline config JSON; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthesis, initialization, shuffling, dropout and permutations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding inputs and outputs.
    #[arg(long, global = true, env = "GRIDCAST_WORKDIR")]
    workdir: Option<PathBuf>,
    /// Forecast horizon in days (1-7). For `train` this sets the model's output length.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// poisson, mse or auto.
    #[arg(long, global = true)]
    loss_mode: Option<LossMode>,
    /// exp or linear.
    #[arg(long, global = true)]
    head: Option<HeadKind>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic outage/weather dataset with its true rates.
    Synth,
    /// Moran's I of per-region outage totals.
    Moran,
    /// Preprocess, train and checkpoint the model.
    Train,
    /// Forecast every region from a checkpoint.
    Forecast {
        /// Checkpoint file; defaults to checkpoint.bin in the workdir.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Last observed day (YYYY-MM-DD); defaults to the last day in the data.
        #[arg(long)]
        as_of: Option<NaiveDate>,
    },
    /// Score a forecast against actual counts.
    Evaluate {
        /// Forecast CSV; defaults to forecast.csv in the workdir.
        #[arg(long)]
        forecast: Option<PathBuf>,
        /// CSV with region_code, a date column and an actual count column.
        #[arg(long)]
        actuals: PathBuf,
    },
}

fn effective_config(g: &GlobalArgs, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("config: {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &g.workdir {
        cfg.paths.workdir = dir.clone();
    }
    if let Some(epochs) = g.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(mode) = g.loss_mode {
        cfg.train.loss_mode = mode;
    }
    if let Some(head) = g.head {
        cfg.model.head = head;
    }
    if let (Some(h), Command::Train) = (g.horizon, command) {
        cfg.preprocess.n_out = h;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli.global, &cli.command)?;
    let workdir = cfg.paths.workdir.clone();
    match cli.command {
        Command::Synth => {
            for f in cmd_synth(&cfg)? {
                println!("{}", f.display());
            }
        }
        Command::Moran => {
            let result = cmd_moran(&cfg)?;
            print_json(&result)?;
            log::info!("wrote {}", workdir.join(MORAN_FILE).display());
        }
        Command::Train => {
            let summary = cmd_train(&cfg)?;
            print_json(&summary)?;
        }
        Command::Forecast { checkpoint, as_of } => {
            let out = cmd_forecast(&cfg, checkpoint.as_deref(), as_of, cli.global.horizon)?;
            let regions = out.rows.iter().map(|r| r.region_code).collect::<std::collections::BTreeSet<_>>();
            println!(
                "forecast as of {}: {} rows for {} regions -> {}",
                out.as_of,
                out.rows.len(),
                regions.len(),
                workdir.join(FORECAST_FILE).display()
            );
            if !out.comparison.is_empty() {
                println!("{} rows have actuals (comparison.csv)", out.comparison.len());
            }
        }
        Command::Evaluate { forecast, actuals } => {
            let report = cmd_evaluate(&cfg, forecast.as_deref(), &actuals)?;
            print_json(&report.aggregate)?;
            log::info!("wrote {}", workdir.join(METRICS_FILE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // stage errors already embed their source in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
