//! `btn-sim`: command-line front end.
//!
//! Every failure prints one line `BTN-ERR: <class>: <message>` on stderr
//! and exits with 1 (invalid input), 2 (numerical failure) or 3 (I/O).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "btn-sim", version, about = "Transport-network simulator and verification suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct IoArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-dependent run: trajectory, ledger, final fields.
    Run(IoArgs),
    /// Pseudo-time steady solve from the configured initial data.
    Steady(IoArgs),
    /// Steady solve and decay fit for each κ in a list.
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        /// Comma-separated ascending κ values.
        #[arg(long, value_delimiter = ',')]
        kappas: Option<Vec<f64>>,
    },
    /// Runs the acceptance suite.
    Verify {
        /// Accepted for interface symmetry; the suite uses fixed scenarios.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Writes `verify.txt` here when given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(err: &CliError) -> ExitCode {
    let msg = err.to_string().replace('\n', " ");
    eprintln!("BTN-ERR: {}: {msg}", err.class());
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    let result = match cli.command {
        Command::Run(io) => commands::cmd_run(&io.config, &io.out),
        Command::Steady(io) => commands::cmd_steady(&io.config, &io.out),
        Command::Sweep { io, kappas } => commands::cmd_sweep(&io.config, &io.out, kappas.as_deref()),
        Command::Verify { config, out } => commands::cmd_verify(config.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
