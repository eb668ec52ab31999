use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "shapeop", version, about = "Shape-to-solution surrogates on parametric domains")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set bench.h=0.03125`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the γ-sequence, c_γ and Jacobian bounds; writes atlas.csv.
    Inspect,
    /// Solve the pulled-back problem at one parameter.
    Solve {
        /// Comma-separated parameter, e.g. `0.5,-1,0`.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        /// Nodal solution CSV (default: <output_dir>/solution.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the configured surrogate and write it as JSON.
    Fit {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a fitted surrogate at one parameter.
    Eval {
        #[arg(long)]
        surrogate: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        /// Coefficient CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Decoded nodal solution CSV.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Run the benchmark and write CSV, SVG and JSON outputs.
    Bench,
    /// Summarize a finished benchmark directory.
    Report {
        /// Benchmark output directory (default: output_dir).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.jobs {
        Some(0) => Err(shapeop::Error::Config("--jobs must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::run(&cli)),
            Err(e) => Err(shapeop::Error::SolverFailed(format!("thread pool: {e}"))),
        },
        None => commands::run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
