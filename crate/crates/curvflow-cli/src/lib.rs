//! Driver behind the `curvflow` binary: argument parsing, config validation,
//! dispatch and artifact writing.
//!
//! Exit codes: 0 success, 1 a numerical check failed, 2 bad config or input,
//! 3 numerical failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
pub mod config;
mod error;
pub mod output;

pub use commands::execute;
pub use error::{CliError, CliResult, Violations};

pub fn version() -> String {
    format!("{} (constants schema {})", env!("CARGO_PKG_VERSION"), curvflow::constants::SCHEMA_VERSION)
}

#[derive(Debug, Parser)]
#[command(name = "curvflow", about = "Numerical lab for the prescribed scalar curvature flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Radial-integral constants as flat JSON.
    Constants {
        #[arg(long)]
        dim: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quadrature of the two-bubble interaction integrals against their leading terms.
    Interactions {
        #[arg(long)]
        dim: u32,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rotationally symmetric PDE run; writes the diagnostics CSV.
    Flow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit_gnuplot: bool,
    },
    /// Reduced bubble dynamics; writes the long-format trajectory CSV.
    Shadow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit_gnuplot: bool,
    },
    /// Split a `theta,u` field into pole bubbles and a remainder.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dim: u32,
        /// Number of bubbles: 1 (north pole) or 2 (both poles).
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long)]
        out: PathBuf,
        /// JSON function spec of K on the sphere; K = 1 when absent.
        #[arg(long)]
        k: Option<PathBuf>,
        /// Starting concentration.
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
    },
    /// Sample the compactness condition on the critical set of K.
    CheckCond {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Canned scenarios.
    Scenario {
        #[command(subcommand)]
        which: Scenario,
    },
}

#[derive(Debug, Subcommand)]
pub enum Scenario {
    /// Single bubble sliding along the flat direction of 1 - Σx⁴ in dimension five.
    DivergeN5 {
        /// Directory receiving trajectory.csv and report.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        emit_gnuplot: bool,
    },
}

/// Cap rayon's pool from `CURVFLOW_THREADS` when set.
pub fn configure_threads(var: Option<&str>) -> CliResult<()> {
    let Some(s) = var else { return Ok(()) };
    let n: usize = s
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("CURVFLOW_THREADS must be a positive integer (got `{s}`)")))?;
    // a pool built earlier in the process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn version_names_the_schema() {
        assert!(version().ends_with(&format!("(constants schema {})", curvflow::constants::SCHEMA_VERSION)));
    }

    #[test]
    fn thread_variable_must_be_positive() {
        assert!(configure_threads(None).is_ok());
        assert_eq!(configure_threads(Some("0")).unwrap_err().exit_code(), 2);
        assert_eq!(configure_threads(Some("x")).unwrap_err().exit_code(), 2);
    }
}
