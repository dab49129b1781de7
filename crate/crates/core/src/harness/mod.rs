//! Example 1 family, scaling experiments, least-squares fits and plots.

pub mod example1;
pub mod experiment;
pub mod fit;
pub mod plot;

pub use example1::{example1_mdp, example1_qstar, paper_budget};
pub use experiment::{
    epoch_trace_experiment, read_rows_csv, scaling_experiment, write_rows_csv, BudgetRule,
    ExperimentConfig, ExperimentOutcome, ExperimentRow, FlaggedRun,
};
pub use fit::{fit_loglog_slope, ols, LineFit};
pub use plot::{render_scaling_svg, render_trace_svg};
