//! `forcegp`: fit, predict, study, compare, decompose and simulate from the shell.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forcegp::signal::Kind;

#[derive(Parser)]
#[command(name = "forcegp", version, about = "Modal force reconstruction with frequency-sparse Gaussian processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set fit.starts=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit hyperparameters on the configured inputs and write the model file.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Model path; `<output_dir>/model.json` by default.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Predict the modal force from a model; writes `time,mean,std`.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        model: PathBuf,
        /// Force CSV path; `<output_dir>/force.csv` by default.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write the full posterior covariance matrix.
        #[arg(long)]
        covariance_out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study; writes `study.csv` and `study.json`.
    Study {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare a candidate signal with a reference; prints a JSON report.
    Metrics {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        reference_column: Option<String>,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        candidate_column: Option<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Project sensor CSVs onto mode shapes; writes `modal_<kind>.csv`.
    Decompose {
        #[command(flatten)]
        config: ConfigArgs,
        /// Sensor table as KIND=PATH; repeat for several kinds.
        #[arg(long = "sensors", value_name = "KIND=PATH", value_parser = commands::parse_sensor_arg, required = true)]
        sensors: Vec<(Kind, PathBuf)>,
        /// Mode shape CSV; `[modes]` from the configuration when absent.
        #[arg(long)]
        shapes: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate the broadband cantilever fixture as CSV files.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let load = |args: &ConfigArgs| config::load(args.config.as_deref(), &args.overrides);
    match cli.command {
        Command::Fit { config, out } => commands::cmd_fit(&load(&config)?, out),
        Command::Predict { config, model, out, covariance_out } => {
            commands::cmd_predict(&load(&config)?, &model, out, covariance_out)
        }
        Command::Study { config } => commands::cmd_study(&load(&config)?),
        Command::Metrics { config, reference, reference_column, candidate, candidate_column, out } => commands::cmd_metrics(
            &load(&config)?,
            &reference,
            reference_column.as_deref(),
            &candidate,
            candidate_column.as_deref(),
            out,
        ),
        Command::Decompose { config, sensors, shapes, out_dir } => {
            commands::cmd_decompose(&load(&config)?, &sensors, shapes.as_deref(), out_dir)
        }
        Command::Simulate { config, out_dir } => commands::cmd_simulate(&load(&config)?, out_dir),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<forcegp::error::Error>())
        .any(|e| e.is_numerical());
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
