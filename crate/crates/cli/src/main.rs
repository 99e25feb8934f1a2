//! `cmpslab`: reproducible ground-state runs for one-dimensional contact
//! Bose gases with a cMPS ansatz.
//!
//! Subcommands: `run` executes a JSON-configured experiment into an output
//! directory, `resume` completes an interrupted run, `report` emits tidy
//! plot-data series from a finished run, and `bethe` evaluates the exact
//! single-gas energy directly. Set `CMPSLAB_LOG` (error|warn|info|debug)
//! to control logging.

mod config;
mod io;
mod modes;
mod report;

/// Bitwise-reproducible runs need alignment-stable numeric buffers.
#[global_allocator]
static ALLOC: cmpslab_core::exec::AlignedAlloc = cmpslab_core::exec::AlignedAlloc;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "cmpslab", version, about = "variational cMPS ground states for 1D Bose gases")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override for the whole run.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Complete the missing points of an interrupted run.
    Resume { dir: PathBuf },
    /// Emit tidy x,y,series tables from a completed run.
    Report { dir: PathBuf },
    /// Evaluate the exact ground-state energy e(γ) of the single gas.
    Bethe {
        /// Comma-separated list of dimensionless couplings.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        /// Quadrature nodes.
        #[arg(long, default_value_t = 256)]
        nodes: usize,
        /// Also write the table into this run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("CMPSLAB_LOG", "info"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn finish(summary: modes::ExecSummary) -> ExitCode {
    if summary.no_op {
        println!("run already complete; nothing to do");
        return ExitCode::SUCCESS;
    }
    println!(
        "computed {} point(s), reused {}, {} failure(s)",
        summary.computed,
        summary.skipped,
        summary.failed.len()
    );
    if summary.failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in &summary.failed {
            eprintln!("failed: {f}");
        }
        ExitCode::FAILURE
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { config, out, seed } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                config.set_seed(seed);
            }
            let dir = out
                .or_else(|| config.output_dir().cloned())
                .context("no output directory: set `output_dir` in the config or pass --out")?;
            let summary = modes::run(&dir, &config)?;
            Ok(finish(summary))
        }
        Command::Resume { dir } => {
            let summary = modes::resume(&dir)?;
            Ok(finish(summary))
        }
        Command::Report { dir } => {
            let written = report::report(&dir)?;
            for name in &written {
                println!("{}", dir.join(name).display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bethe { gamma, nodes, out } => {
            let config = config::bethe_config(gamma, nodes, out.clone())?;
            println!("gamma,energy,residual,nodes");
            let RunConfig::Bethe(b) = &config else { unreachable!() };
            for &g in &b.gammas {
                let sol = cmpslab_core::bethe::solve_bethe(g, b.nodes)?;
                println!(
                    "{},{},{},{}",
                    io::fmt_f64(sol.gamma),
                    io::fmt_f64(sol.energy),
                    io::fmt_f64(sol.residual),
                    sol.quad_nodes
                );
            }
            if let Some(dir) = out {
                let summary = modes::run(&dir, &config)?;
                return Ok(finish(summary));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
