//! Experiment runner: configs, parallel grids, ledgers, summaries, scaling
//! fits and baseline comparisons.

mod baselines;
mod config;
mod grid;
mod stats;

pub use baselines::{run_full_info_ogd, Flaxman, FlaxmanParameters};
pub use config::{ExperimentConfig, PolicySpec, Seeds};
pub use grid::{
    run_cell, run_grid, summarize, write_atomic, CellLedger, CellOutput, CellStatus, FailureEntry,
    GridOutcome, OgdCheck, RunOptions,
};
pub use stats::{
    compare_baseline, compare_rows, fit_scaling, least_squares, mean_stderr, read_summary,
    write_summary, Axis, CompareRow, FitResult, FitStatus, SummaryRow, MIN_FIT_POINTS,
};
