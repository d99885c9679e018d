//! Command-line front end: assumption validation, single solves, offline
//! reduced-basis training, online queries and diagnostic reports.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit code for domain and assumption failures (out-of-box parameters,
/// violated family assumptions, stale basis archives).
pub const EXIT_DOMAIN: u8 = 2;
/// Exit code for solver failures and tolerance violations.
pub const EXIT_SOLVER: u8 = 3;
/// Exit code for unusable configuration files.
pub const EXIT_CONFIG: u8 = 64;

#[derive(Parser)]
#[command(
    name = "epsrb",
    version,
    about = "Minimal-norm approximate solver with an offline/online reduced basis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the configured family (coercivity, target norms, norm
    /// equivalence) and write a constants report.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve a single parameter instance and write a solution record.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter value as comma-separated components, e.g. 0.5,0.2.
        #[arg(long)]
        nu: String,
        /// Override the configured tolerance for this solve.
        #[arg(long)]
        eps: Option<f64>,
        /// Also dump the solution vectors.
        #[arg(long, value_enum)]
        dump: Option<DumpFormat>,
    },
    /// Train the reduced basis over the training grid (offline phase).
    Offline {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the configured stopping tolerance.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Query a trained basis at parameter values (online phase).
    Online {
        #[command(flatten)]
        common: CommonArgs,
        /// Basis archive produced by `offline`.
        #[arg(long)]
        basis: PathBuf,
        /// Parameter values, repeatable: --nu 0.1,0.2 --nu 0.6,0.3.
        #[arg(long = "nu")]
        nus: Vec<String>,
        /// Additionally draw this many uniform samples from the box.
        #[arg(long)]
        sample: Option<usize>,
        /// Seed for --sample draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Surrogate-vs-exact error sweep over the stored training grid.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Basis archive produced by `offline`.
        #[arg(long)]
        basis: PathBuf,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for parameter sweeps; the EPSRB_WORKERS environment
    /// variable overrides this flag. Defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
}

/// A command failure carrying its exit code.
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

pub type CmdResult = Result<(), Failure>;

fn configure_workers(flag: Option<usize>) {
    let from_env = std::env::var("EPSRB_WORKERS").ok().and_then(|s| s.parse::<usize>().ok());
    if let Some(workers) = from_env.or(flag) {
        if workers > 0 {
            // Ignore the error when a pool already exists (tests).
            let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum DumpFormat {
    /// One value per row with an index column.
    Csv,
    /// Raw little-endian f64.
    Bin,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { common } => {
            configure_workers(common.workers);
            commands::validate(&common.config, &common.out)
        }
        Command::Solve { common, nu, eps, dump } => {
            configure_workers(common.workers);
            commands::solve(&common.config, &common.out, &nu, eps, dump)
        }
        Command::Offline { common, delta } => {
            configure_workers(common.workers);
            commands::offline(&common.config, &common.out, delta)
        }
        Command::Online { common, basis, nus, sample, seed } => {
            configure_workers(common.workers);
            commands::online(&common.config, &common.out, &basis, &nus, sample, seed)
        }
        Command::Report { common, basis } => {
            configure_workers(common.workers);
            commands::report(&common.config, &common.out, &basis)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
