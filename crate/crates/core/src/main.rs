use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cabo::harness::{
    compare_baseline, fit_scaling, read_summary, run_grid, Axis, ExperimentConfig, RunOptions,
    Seeds, SummaryRow,
};

#[derive(Parser)]
#[command(
    name = "cabo",
    version,
    about = "Comparator-adaptive bandit convex optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy x environment x seed grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Half-open seed range, e.g. 0..20.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        trace: bool,
    },
    /// Fit regret against T (log-log) or comparator norm (linear).
    Fit {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        axis: Axis,
    },
    /// Compare two summaries row by row.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Keep only this policy's rows from `--a`.
        #[arg(long)]
        policy_a: Option<String>,
        /// Keep only this policy's rows from `--b`.
        #[arg(long)]
        policy_b: Option<String>,
        /// Keep only rows at this comparator norm.
        #[arg(long)]
        norm: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            out,
            workers,
            trace,
        } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let opts = RunOptions {
                seeds: seeds.as_deref().map(Seeds::parse_range).transpose()?,
                output: out,
                workers,
                trace: trace.then_some(true),
            };
            if opts.output.is_none() && cfg.output.is_none() {
                anyhow::bail!("no output directory: pass --out or set `output` in the config");
            }
            let start = Instant::now();
            let outcome = run_grid(&cfg, &opts)?;
            let dir = outcome
                .output
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            eprintln!(
                "{} cells in {:.2}s, {} failed, {} violations -> {}",
                outcome.cells.len(),
                start.elapsed().as_secs_f64(),
                outcome.failures.len(),
                outcome.violations(),
                dir
            );
            for f in &outcome.failures {
                eprintln!(
                    "  {} / {} T={} seed={}: {}",
                    f.policy, f.environment, f.horizon, f.seed, f.error
                );
            }
            Ok(outcome.success())
        }
        Command::Fit { summary, axis } => {
            let rows = read_summary(
                std::fs::File::open(&summary)
                    .with_context(|| format!("opening {}", summary.display()))?,
            )?;
            let fits = fit_scaling(&rows, axis);
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for f in &fits {
                w.serialize(f)?;
            }
            w.flush()?;
            Ok(true)
        }
        Command::Compare {
            a,
            b,
            policy_a,
            policy_b,
            norm,
        } => {
            let load = |path: &PathBuf, policy: &Option<String>| -> Result<Vec<SummaryRow>> {
                let rows = read_summary(
                    std::fs::File::open(path)
                        .with_context(|| format!("opening {}", path.display()))?,
                )?;
                Ok(rows
                    .into_iter()
                    .filter(|r| policy.as_ref().is_none_or(|p| &r.policy == p))
                    .filter(|r| norm.is_none_or(|n| r.norm == n))
                    .collect())
            };
            let a = load(&a, &policy_a)?;
            let b = load(&b, &policy_b)?;
            let rows = compare_baseline(&a, &b)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
