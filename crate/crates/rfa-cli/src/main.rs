//! `rfa` — grouped robust factor analysis for heavy-tailed panels.
//!
//! Subcommands: `simulate` (Monte Carlo on built-in designs), `fit` (grouped
//! factor model on a panel CSV), `forecast` (pseudo out-of-sample VAR
//! comparison), and `metrics` (score partitions and common components).
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure, 4 internal bug.

mod args;
mod config;
mod error;
mod io;
mod run;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, Result};

/// Caps the worker pool at `RFA_THREADS` threads when the variable is set.
/// The variable is validated in every build; without the `parallel` feature
/// everything runs on one thread, which respects any valid cap.
fn configure_threads() -> Result<()> {
    let Some(raw) = std::env::var_os("RFA_THREADS") else {
        return Ok(());
    };
    let parsed = raw
        .to_str()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let Some(threads) = parsed else {
        return Err(CliError::Input(format!(
            "RFA_THREADS must be a positive integer, got `{}`",
            raw.to_string_lossy()
        )));
    };
    #[cfg(feature = "parallel")]
    {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool setup failed: {e}")));
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(args) => run::simulate(args),
        Command::Fit(args) => run::fit(args),
        Command::Forecast(args) => run::forecast(args),
        Command::Metrics(args) => run::metrics(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
