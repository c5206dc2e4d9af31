//! `recap` command line: scheduler replay, synthetic stream
//! generation, training, checkpoint evaluation, and report emission.
//!
//! Exit codes: 0 ok, 1 usage error, 2 runtime error, 3 runtime
//! invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use recap_cli::config::ExperimentConfig;
use recap_cli::harness::{self, HarnessError};
use recap_cli::{io, report};
use recap_core::streams::{generate_streams, SyntheticStreamSpec};
use recap_core::SchedulerConfig;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "recap", version, about = "Online loss reweighting with replay: scheduler replay, toy training runs, and reports")]
struct Cli {
    /// Seed for any stochastic work; commands that are fully
    /// determined by their inputs accept and ignore it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Overwrite existing output paths.
    #[arg(long, global = true)]
    force: bool,
    /// Rollout worker count; results never depend on it. Present for
    /// interface stability, execution is single-threaded.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay recorded loss streams through the scheduler and emit
    /// per-step signals and weights as JSONL.
    SchedSim {
        /// Input CSV with header step,objective,value.
        #[arg(long)]
        streams: PathBuf,
        /// Half window W; the window spans 2W samples.
        #[arg(long = "W", default_value_t = 10)]
        half_window: usize,
        /// Softmax temperature.
        #[arg(long = "T", default_value_t = 5.0)]
        temperature: f64,
        /// Convergence-rate convention.
        #[arg(long, default_value = "improvement-up")]
        c_convention: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic per-objective loss streams from a JSON spec.
    Streams {
        /// JSON file: {"streams": [{objective, init, decay_rate, plateau, noise_sigma, steps}, ...]}.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training experiment from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to runs/<run id>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved checkpoint on one domain of its run config.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        domain: String,
        /// Experiment config; defaults to config.json next to the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate run summaries into a forgetting report CSV.
    Report {
        /// Run directories.
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Invariant(m) => m,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Invariant(m) => CliError::Invariant(m),
            HarnessError::Config(c) => CliError::Usage(c.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn log_enabled() -> bool {
    !matches!(
        std::env::var("RECAP_LOG_LEVEL").as_deref(),
        Ok("quiet") | Ok("off")
    )
}

fn check_out_path(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Runtime(format!(
            "output path {} exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct StreamSpecFile {
    streams: Vec<SyntheticStreamSpec>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SchedSim { streams, half_window, temperature, c_convention, out } => {
            check_out_path(&out, cli.force)?;
            let convention = io::parse_c_convention(&c_convention)
                .ok_or_else(|| CliError::Usage(format!("unknown c-convention {c_convention}")))?;
            let data = io::read_streams_csv(&streams)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let config = SchedulerConfig {
                half_window,
                temperature,
                c_convention: convention,
                ..SchedulerConfig::default()
            };
            let records = io::run_sched_sim(&data, config)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            io::write_signal_records(&out, &records)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            if log_enabled() {
                eprintln!("wrote {} signal records to {}", records.len(), out.display());
            }
            Ok(())
        }
        Command::Streams { spec, out } => {
            check_out_path(&out, cli.force)?;
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", spec.display())))?;
            let file: StreamSpecFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad stream spec: {e}")))?;
            if file.streams.is_empty() {
                return Err(CliError::Usage("stream spec lists no streams".into()));
            }
            let series = generate_streams(&file.streams, cli.seed);
            let names: Vec<String> = file.streams.iter().map(|s| s.objective.clone()).collect();
            io::write_streams_csv(&out, &names, &series)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            if log_enabled() {
                eprintln!("wrote {} streams to {}", names.len(), out.display());
            }
            Ok(())
        }
        Command::Train { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", config.display())))?;
            let experiment: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad experiment config: {e}")))?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("runs").join(experiment.run_id()));
            harness::run_experiment(&experiment, &out_dir, cli.force)?;
            if log_enabled() {
                eprintln!("run complete: {}", out_dir.display());
            }
            Ok(())
        }
        Command::Eval { checkpoint, domain, config } => {
            let config_path = config.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join("config.json")
            });
            let text = std::fs::read_to_string(&config_path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", config_path.display())))?;
            let experiment: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad experiment config: {e}")))?;
            let metrics = harness::eval_checkpoint(&checkpoint, &experiment, &domain)?;
            for (name, value) in metrics {
                println!("{name}={value}");
            }
            Ok(())
        }
        Command::Report { runs, out } => {
            let dirs: Vec<&Path> = runs.iter().map(|p| p.as_path()).collect();
            let report = report::forgetting_report(&dirs)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            match out {
                Some(path) => {
                    check_out_path(&path, cli.force)?;
                    std::fs::write(&path, report)
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                }
                None => print!("{report}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
