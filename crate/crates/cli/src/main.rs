//! `spil` command line: validate specs, run sweeps, filter unsafe seeds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spil_cli::runner::{run_experiment, select_unsafe_seeds};
use spil_cli::spec::load_spec;
use spil_cli::CliError;

#[derive(Parser)]
#[command(name = "spil", about = "Chance-constrained policy training sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full sweep described by a spec file.
    Run {
        spec: PathBuf,
        /// Output directory (overrides the spec; SPIL_OUT_DIR overrides both).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent cell budget.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Load and validate a spec file, reporting the first violation.
    Validate { spec: PathBuf },
    /// Evaluate freshly initialized policies for seeds 0..N and print the
    /// unsafe ones (evaluation p_s < 0.5), one per line.
    SelectUnsafeSeeds {
        spec: PathBuf,
        #[arg(long, default_value_t = 100)]
        candidates: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { spec, out, workers } => {
            let spec = load_spec(&spec)?;
            if spec.base.surrogate.shape_condition_violated() {
                eprintln!(
                    "warning: surrogate parameters violate the conservative shape \
                     condition a2 < a1 / (1 + a1); proceeding as configured"
                );
            }
            let out_dir = std::env::var_os("SPIL_OUT_DIR")
                .map(PathBuf::from)
                .or(out)
                .unwrap_or_else(|| PathBuf::from(&spec.output_dir));
            let outcome = run_experiment(&spec, &out_dir, workers)?;
            let ok = outcome.summary.cells.iter().filter(|c| c.ok).count();
            println!(
                "{}/{} cells succeeded; summary at {}",
                ok,
                outcome.summary.cells.len(),
                out_dir.join("summary.json").display()
            );
            Ok(if outcome.any_failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::Validate { spec } => {
            load_spec(&spec)?;
            println!("ok");
            Ok(ExitCode::SUCCESS)
        }
        Command::SelectUnsafeSeeds { spec, candidates } => {
            let spec = load_spec(&spec)?;
            let seeds: Vec<u64> = (0..candidates).collect();
            for s in select_unsafe_seeds(&seeds, &spec.base) {
                println!("{s}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
