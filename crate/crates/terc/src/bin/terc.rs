//! Command-line entry point: `terc train`, `terc analyze`, `terc report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use terc::cli::{
    cmd_analyze, cmd_report, cmd_train, load_report, write_report, AlgChoice, AnalyzeOptions,
    EstimatorChoice, ReportFormat, EXIT_ANALYSIS, EXIT_CONFIG, EXIT_OK,
};
use terc::error::TercError;

#[derive(Parser)]
#[command(name = "terc", version, about = "Information-based state variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and record its trajectories
    Train {
        /// Run configuration file
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Output directory for trajectories and checkpoints
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Measure per-variable information and select a state subset
    Analyze {
        /// Trajectory file (JSON lines)
        #[arg(short = 'i', long = "input")]
        input: PathBuf,
        /// Selection algorithm: naive, alg1, alg2
        #[arg(long = "alg", default_value = "alg2")]
        alg: String,
        /// Estimator: plugin, mine
        #[arg(long = "estimator", default_value = "plugin")]
        estimator: String,
        /// Also compute per-quartile phi tables over training progress
        #[arg(long = "quartiles")]
        quartiles: bool,
        /// Baseline comparison to include (supported: pi)
        #[arg(long = "baseline")]
        baseline: Option<String>,
        /// Estimation runs per variable
        #[arg(long = "runs", default_value_t = 10)]
        runs: usize,
        /// Seed override (defaults to the trajectory's recorded seed)
        #[arg(long = "seed")]
        seed: Option<u64>,
        /// Report output path (JSON)
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Render a report as csv, json, dot, or plotdata
    Report {
        /// Report file produced by `terc analyze`
        #[arg(short = 'i', long = "input")]
        input: PathBuf,
        /// Output format: csv, json, dot, plotdata
        #[arg(short = 'f', long = "format")]
        format: String,
        /// Output file (stdout when omitted)
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &TercError) -> i32 {
    match err {
        TercError::Config(_) | TercError::InvalidArgument(_) => EXIT_CONFIG,
        _ => EXIT_ANALYSIS,
    }
}

fn run() -> Result<i32, (TercError, i32)> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, out } => {
            cmd_train(&config, &out).map_err(|e| {
                let code = exit_code_for(&e);
                (e, code)
            })?;
            Ok(EXIT_OK)
        }
        Command::Analyze {
            input,
            alg,
            estimator,
            quartiles,
            baseline,
            runs,
            seed,
            out,
        } => {
            let algorithm: AlgChoice = alg.parse().map_err(|e| (e, EXIT_CONFIG))?;
            let estimator: EstimatorChoice = estimator.parse().map_err(|e| (e, EXIT_CONFIG))?;
            let baseline_pi = match baseline.as_deref() {
                None => false,
                Some("pi") => true,
                Some(other) => {
                    return Err((
                        TercError::Config(format!("unknown baseline {other:?}")),
                        EXIT_CONFIG,
                    ))
                }
            };
            if runs == 0 {
                return Err((TercError::Config("runs must be positive".into()), EXIT_CONFIG));
            }
            let opts = AnalyzeOptions {
                algorithm,
                estimator,
                quartiles,
                baseline_pi,
                runs,
                seed,
                ..AnalyzeOptions::default()
            };
            let report = cmd_analyze(&input, &opts).map_err(|e| (e, EXIT_ANALYSIS))?;
            let failed = !report.failed.is_empty();
            write_report(&report, &out).map_err(|e| (e, EXIT_ANALYSIS))?;
            if failed {
                eprintln!("terc: estimation failed for: {}", report.failed.join(", "));
                Ok(EXIT_ANALYSIS)
            } else {
                Ok(EXIT_OK)
            }
        }
        Command::Report { input, format, out } => {
            let format: ReportFormat = format.parse().map_err(|e| (e, EXIT_CONFIG))?;
            let report = load_report(&input).map_err(|e| (e, EXIT_ANALYSIS))?;
            let rendered = cmd_report(&report, format).map_err(|e| (e, EXIT_CONFIG))?;
            match out {
                Some(path) => std::fs::write(path, rendered)
                    .map_err(|e| (TercError::Io(e), EXIT_ANALYSIS))?,
                None => print!("{rendered}"),
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err((err, code)) => {
            eprintln!("terc: {err}");
            ExitCode::from(code as u8)
        }
    }
}
