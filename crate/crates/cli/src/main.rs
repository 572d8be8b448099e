use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use zoh_cli::config::{DiagConfig, ExperimentConfig};
use zoh_cli::run::{apply_seed_override, run_experiment, RunOptions, TraceFormat};
use zoh_cli::{compare, diag, CliError};

#[derive(Parser)]
#[command(name = "zoh", version, about = "Zeroth-order optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method of a config for the configured number of trials.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Check estimator bounds against Monte Carlo moments.
    Diag {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiply the Lipschitz constant before checking.
        #[arg(long)]
        lipschitz_scale: Option<f64>,
    },
    /// Aggregate summary.csv files from several runs.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// CSV instead of a markdown table.
        #[arg(long)]
        csv: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zoh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            out,
            jobs,
            format,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_seed_override(&mut cfg)?;
            let opts = RunOptions {
                jobs,
                out,
                format: match format {
                    Format::Csv => TraceFormat::Csv,
                    Format::Jsonl => TraceFormat::Jsonl,
                },
            };
            let result = run_experiment(&cfg, &opts)?;
            for g in result.grid.iter().filter(|g| g.selected) {
                println!("{}: selected step {}", g.method, g.step);
            }
            println!("wrote {}", result.dir.join("summary.csv").display());
            Ok(())
        }
        Command::Diag {
            config,
            out,
            lipschitz_scale,
        } => {
            let cfg = DiagConfig::load(&config)?;
            let result =
                diag::run_diagnostics(&cfg, out, lipschitz_scale, |line| println!("{line}"))?;
            println!("wrote {}", result.path.display());
            if result.passed() {
                Ok(())
            } else {
                let failed = result.reports().filter(|r| !r.passed).count();
                Err(CliError::Diagnostic(format!(
                    "{failed} configuration(s) failed"
                )))
            }
        }
        Command::Compare { summaries, csv } => {
            let stats = compare::compare(&summaries)?;
            if csv {
                print!("{}", compare::to_csv(&stats));
            } else {
                print!("{}", compare::to_markdown(&stats));
            }
            Ok(())
        }
    }
}
