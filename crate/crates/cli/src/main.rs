use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;

use manifest::RunManifest;

/// Lower bounds on K_G(n→m), see-saw optimization, Tsirelson strategies and
/// finite dimension witnesses.
#[derive(Debug, Parser)]
#[command(name = "gengroth", version)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "GENGROTH_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic lower bound on K_G(n→m).
    Bound {
        n: u64,
        m: u64,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Build an ε-net on S^{dim−1}.
    Net {
        dim: usize,
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write PREFIX.csv (points) and PREFIX.json (header and manifest).
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        max_points: usize,
        /// Consecutive rejections that end construction (default: 200·|net|).
        #[arg(long)]
        max_candidates: Option<usize>,
        /// Random points used to probe the covering property.
        #[arg(long, default_value_t = 100_000)]
        probes: usize,
    },
    /// Maximize Σ M_ij x_i·y_j over unit vectors in R^m.
    Seesaw {
        /// Headerless CSV, one matrix row per line.
        matrix: PathBuf,
        m: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Include the objective trace and the optimal vectors.
        #[arg(long)]
        trace: bool,
    },
    /// Check Tsirelson's strategy against a·b on random settings.
    Tsirelson {
        n: usize,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the finite dimension witness for (n, d, ε).
    Witness {
        n: usize,
        d: usize,
        eps: f64,
        /// Budgets for ε near the certification threshold.
        #[arg(long)]
        deep: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run even when n ≤ 2d² (no separation can be claimed).
        #[arg(long)]
        allow_small_n: bool,
        #[arg(long)]
        samples_per_region: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Numerical checks of the special-function facts behind the bound.
    AppendixCheck {
        #[arg(long, default_value_t = 10_000)]
        nmax: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bound { .. } => "bound",
            Command::Net { .. } => "net",
            Command::Seesaw { .. } => "seesaw",
            Command::Tsirelson { .. } => "tsirelson",
            Command::Witness { .. } => "witness",
            Command::AppendixCheck { .. } => "appendix-check",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let started = Instant::now();
    let manifest = RunManifest::new(cli.command.name(), std::env::args().collect());
    match commands::run(cli.command, manifest, started) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
