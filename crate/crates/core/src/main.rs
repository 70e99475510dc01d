use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subcorr::harness::{execute, load_config, Command, Overrides};

#[derive(Parser)]
#[command(name = "subcorr", version, about = "Subspace correction experiments on small SPD systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured algorithm and write a CSV energy trace.
    Run(Args),
    /// Check the expectation identities and bounds for the configured problem.
    Verify(Args),
    /// Print the extreme eigenvalues of B_a A and the derived rate bounds.
    Spectrum(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Run(a) => (Command::Run, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Spectrum(a) => (Command::Spectrum, a),
    };
    let result = load_config(&args.config, Overrides { trials: args.trials, seed: args.seed })
        .and_then(|cfg| execute(command, &cfg))
        .and_then(|(text, status)| {
            match &args.out {
                Some(path) => std::fs::write(path, &text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
            Ok(status)
        });
    match result {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("subcorr: {e}");
            ExitCode::from(e.exit_status().code() as u8)
        }
    }
}
