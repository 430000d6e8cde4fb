//! Command line front end: configuration parsing, command dispatch and
//! deterministic, line-oriented artifacts.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{parse_config, parse_config_str, Command, ConfigError, Overrides, RunConfig};
pub use run::{run, Outcome, RunError, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK};

/// Command line arguments.
#[derive(Debug, Clone, Parser)]
#[command(name = "dphase", version, about = "Double-phase Dirichlet problems on a grid")]
pub struct Cli {
    /// Command to run; may instead come from the `command` key of the config.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Configuration file (flat `key = value` with dotted sections).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Interior nodes per axis.
    #[arg(long)]
    pub m: Option<usize>,
    /// Dimension, 1 or 2.
    #[arg(long)]
    pub n: Option<usize>,
    /// Exponent q; fractions such as 4/3 are accepted.
    #[arg(long)]
    pub q: Option<String>,
    /// Exponent p; implies relaxed mode unless --strict-sobolev is given.
    #[arg(long)]
    pub p: Option<String>,
    /// Derive p from the Sobolev relation 1/p = 1/q - 1/n.
    #[arg(long)]
    pub strict_sobolev: bool,
    /// Gradient regularization.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Inner solver gradient tolerance.
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Constant weight mu.
    #[arg(long)]
    pub mu_const: Option<String>,
    /// Also write the per-iteration energy (or objective) as CSV.
    #[arg(long)]
    pub dump_energy_trace: bool,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            command: self.command,
            out: self.out.clone(),
            seed: self.seed,
            m: self.m,
            n: self.n,
            q: self.q.clone(),
            p: self.p.clone(),
            strict_sobolev: self.strict_sobolev,
            epsilon: self.epsilon.clone(),
            tol: self.tol.clone(),
            max_iters: self.max_iters,
            mu_const: self.mu_const.clone(),
            dump_energy_trace: self.dump_energy_trace,
        }
    }
}

/// Parses, runs and reports; returns the process exit status.
pub fn main_with(cli: &Cli) -> i32 {
    let cfg = match parse_config(cli.config.as_deref(), &cli.overrides()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
