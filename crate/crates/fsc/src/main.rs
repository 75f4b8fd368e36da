use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use fsc::{commands, CliError};

/// Factored scaling curves: fit per-factor curves, plan data collection,
/// score embedding coverage, and run the synthetic closed loop.
#[derive(Debug, Parser)]
#[command(name = "fsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one power law per combo; writes fits.json and plot.csv.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        eval_csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn fits into a collection plan; writes plan.json.
    Allocate {
        #[arg(long)]
        config: PathBuf,
        /// Output of `fsc fit` (defaults to <out>/fits.json).
        #[arg(long)]
        fits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding-similarity proxy; writes proxy.json.
    Proxy {
        #[arg(long)]
        train_embeddings: PathBuf,
        #[arg(long)]
        eval_embeddings: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop sweep over a synthetic world; writes sweep.json and seeds.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Fit { config, eval_csv, out } => commands::run_fit(&config, &eval_csv, &out),
        Command::Allocate { config, fits, out } => {
            let fits = fits.unwrap_or_else(|| out.join("fits.json"));
            commands::run_allocate(&config, &fits, &out)
        }
        Command::Proxy { train_embeddings, eval_embeddings, k, out } => {
            commands::run_proxy(&train_embeddings, &eval_embeddings, k, &out)
        }
        Command::Simulate { config, seed, out } => commands::run_simulate(&config, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
