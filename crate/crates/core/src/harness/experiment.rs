//! Scaling and trace experiments on the Example 1 family.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::example1::{example1_mdp, example1_qstar, paper_budget};
use crate::mdp::linf_distance;
use crate::sampling::derive_seed;
use crate::solver::{make_schedule_with_base, run_vrql, RunRecord, StepSize, TraceOptions, VrqlConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRule {
    /// `⌈(512/9)/(1-γ)³⌉` for each discount.
    #[default]
    PaperDefault,
    /// One budget per grid entry.
    Explicit(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lambda: f64,
    pub gamma_grid: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub budget_rule: BudgetRule,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default)]
    pub stepsize: StepSize,
    #[serde(default)]
    pub warm_start: Option<f64>,
    /// Iteration stride of the trace experiment.
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    #[serde(default)]
    pub rows_csv: Option<PathBuf>,
    #[serde(default)]
    pub plot_svg: Option<PathBuf>,
    #[serde(default)]
    pub trace_csv: Option<PathBuf>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_c1() -> f64 {
    1.0
}

fn default_base() -> f64 {
    4.0
}

fn default_stride() -> u64 {
    1
}

impl ExperimentConfig {
    /// Five discounts from 0.80 to 0.97, 100 trials, default budgets.
    pub fn paper_default(lambda: f64) -> Self {
        Self {
            lambda,
            gamma_grid: vec![0.80, 0.85, 0.90, 0.95, 0.97],
            trials: 100,
            budget_rule: BudgetRule::PaperDefault,
            delta: default_delta(),
            seed: 0,
            c1: default_c1(),
            base: default_base(),
            stepsize: StepSize::RescaledLinear,
            warm_start: None,
            trace_stride: default_stride(),
            rows_csv: None,
            plot_svg: None,
            trace_csv: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {} must be non-negative", self.lambda)));
        }
        if self.gamma_grid.is_empty() {
            return Err(Error::InvalidArgument("discount grid is empty".into()));
        }
        if let Some(g) = self.gamma_grid.iter().find(|&&g| !(g > 0.5 && g < 1.0)) {
            return Err(Error::InvalidArgument(format!("discount {g} outside (1/2, 1)")));
        }
        if self.gamma_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("discount grid must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("need at least one trial".into()));
        }
        if let BudgetRule::Explicit(list) = &self.budget_rule {
            if list.len() != self.gamma_grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} budgets for {} discounts",
                    list.len(),
                    self.gamma_grid.len()
                )));
            }
        }
        self.stepsize.validate()?;
        Ok(())
    }

    pub fn budget(&self, index: usize) -> u64 {
        match &self.budget_rule {
            BudgetRule::PaperDefault => paper_budget(self.gamma_grid[index]),
            BudgetRule::Explicit(list) => list[index],
        }
    }

    pub fn vrql(&self) -> VrqlConfig {
        VrqlConfig {
            delta: self.delta,
            c1: self.c1,
            base: self.base,
            stepsize: self.stepsize,
            warm_start: self.warm_start,
        }
    }

    /// Seed of trial `trial` at grid position `index`.
    pub fn trial_seed(&self, index: usize, trial: usize) -> u64 {
        derive_seed(derive_seed(self.seed, index as u64), trial as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub gamma: f64,
    pub n: u64,
    pub trial: usize,
    pub err_linf: f64,
    pub log_complexity: f64,
    pub log_err: f64,
}

/// A run left out of the rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedRun {
    pub gamma: f64,
    pub n: u64,
    pub trial: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExperimentOutcome {
    pub rows: Vec<ExperimentRow>,
    pub flagged: Vec<FlaggedRun>,
}

/// Runs VR-QL from zero on every `(γ, trial)` and records the final error
/// against the closed-form `Q*`. Trials run in parallel; output order is
/// grid-major and independent of scheduling.
pub fn scaling_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let vrql = config.vrql();
    let mut outcome = ExperimentOutcome::default();
    for (index, &gamma) in config.gamma_grid.iter().enumerate() {
        let n = config.budget(index);
        let mdp = example1_mdp(gamma, config.lambda)?;
        let qstar = example1_qstar(gamma, config.lambda)?;
        if let Err(e) = make_schedule_with_base(n, gamma, config.delta, mdp.dim(), config.c1, config.base) {
            if matches!(e, Error::ScheduleInfeasible { .. }) {
                outcome.flagged.extend((0..config.trials).map(|trial| FlaggedRun {
                    gamma,
                    n,
                    trial,
                    reason: e.to_string(),
                }));
                continue;
            }
            return Err(e);
        }
        let errors: Vec<Result<f64>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let (q, _) = run_vrql(&mdp, n, config.trial_seed(index, trial), &vrql, TraceOptions::default())?;
                linf_distance(&q, &qstar)
            })
            .collect();
        let log_complexity = (1.0 / (1.0 - gamma)).ln();
        for (trial, err) in errors.into_iter().enumerate() {
            let err = err?;
            if err > 0.0 && err.is_finite() {
                outcome.rows.push(ExperimentRow {
                    gamma,
                    n,
                    trial,
                    err_linf: err,
                    log_complexity,
                    log_err: err.ln(),
                });
            } else {
                outcome.flagged.push(FlaggedRun {
                    gamma,
                    n,
                    trial,
                    reason: format!("error {err} has no logarithm"),
                });
            }
        }
    }
    Ok(outcome)
}

/// Single run at the first grid discount, recording the per-iteration error.
pub fn epoch_trace_experiment(config: &ExperimentConfig) -> Result<RunRecord<f64>> {
    config.validate()?;
    let gamma = config.gamma_grid[0];
    let mdp = example1_mdp(gamma, config.lambda)?;
    let qstar = example1_qstar(gamma, config.lambda)?;
    let trace = TraceOptions::with_reference(&qstar).stride(config.trace_stride);
    Ok(run_vrql(&mdp, config.budget(0), config.trial_seed(0, 0), &config.vrql(), trace)?.1)
}

/// Header `gamma,n,trial,err_linf,log_complexity,log_err`.
pub fn write_rows_csv<W: Write>(rows: &[ExperimentRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(["gamma", "n", "trial", "err_linf", "log_complexity", "log_err"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<ExperimentRow>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(lambda: f64, trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            gamma_grid: vec![0.6, 0.7],
            trials,
            budget_rule: BudgetRule::Explicit(vec![20_000, 30_000]),
            ..ExperimentConfig::paper_default(lambda)
        }
    }

    #[test]
    fn rows_are_deterministic_and_complete() {
        let config = small(0.5, 4);
        let a = scaling_experiment(&config).unwrap();
        let b = scaling_experiment(&config).unwrap();
        assert_eq!(a.rows.len() + a.flagged.len(), 8);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_rows_csv(&a.rows, &mut ca).unwrap();
        write_rows_csv(&b.rows, &mut cb).unwrap();
        assert_eq!(ca, cb);
        let text = String::from_utf8(ca.clone()).unwrap();
        assert!(text.starts_with("gamma,n,trial,err_linf,log_complexity,log_err\n"));
        assert_eq!(read_rows_csv(ca.as_slice()).unwrap(), a.rows);
        assert!(a.rows.iter().all(|r| r.err_linf > 0.0));
    }

    #[test]
    fn infeasible_budgets_are_flagged() {
        let config = ExperimentConfig {
            budget_rule: BudgetRule::Explicit(vec![50, 30_000]),
            ..small(0.5, 3)
        };
        let out = scaling_experiment(&config).unwrap();
        assert_eq!(out.flagged.len(), 3);
        assert!(out.flagged.iter().all(|f| f.gamma == 0.6));
        assert_eq!(out.rows.len(), 3);
    }

    #[test]
    fn config_validation_and_json() {
        let mut config = ExperimentConfig::paper_default(0.5);
        assert!(config.validate().is_ok());
        let text = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        let minimal: ExperimentConfig =
            serde_json::from_str(r#"{"lambda": 0.5, "gamma_grid": [0.8, 0.9], "trials": 3}"#).unwrap();
        assert_eq!(minimal.budget_rule, BudgetRule::PaperDefault);
        assert_eq!(minimal.delta, 0.1);
        config.gamma_grid = vec![0.9, 0.8];
        assert!(config.validate().is_err());
        config.gamma_grid = vec![0.4];
        assert!(config.validate().is_err());
        config.gamma_grid = vec![0.9];
        config.trials = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn trace_has_one_plateau_per_epoch() {
        let config = ExperimentConfig {
            gamma_grid: vec![0.9],
            trace_stride: 50,
            ..ExperimentConfig::paper_default(0.5)
        };
        let record = epoch_trace_experiment(&config).unwrap();
        let m = record.schedule.as_ref().unwrap().num_epochs;
        let epochs: std::collections::BTreeSet<_> = record.trace.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs.len(), m);
        let again = epoch_trace_experiment(&config).unwrap();
        assert_eq!(record.trace, again.trace);
    }
}
