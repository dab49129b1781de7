//! Synchronous Q-learning and the epoch-based variance-reduced variant.
//!
//! Every iteration consumes one full draw from the generative model. The
//! variance-reduced update re-centres each noisy Bellman application around a
//! Monte Carlo estimate `T̄(Q̄)` computed at the start of the epoch:
//!
//! ```text
//! θ ← (1 - α) θ + α (T̂_k(θ) - T̂_k(Q̄) + T̄(Q̄))
//! ```

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{linf_distance, solve_optimal_q, QFunction, TabularMdp};
use crate::sampling::{empirical_bellman, monte_carlo_bellman, SeededSampler, TransitionSample};
use crate::scalar::Scalar;

/// Step-size rule; the iteration counter `k` starts at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
#[derive(Default)]
pub enum StepSize {
    /// `α_k = 1 / (1 + (1 - γ) k)`.
    #[default]
    RescaledLinear,
    /// `α_k = k^{-ω}` with `ω ∈ [0, 1]`.
    Polynomial(f64),
}


impl StepSize {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSize::RescaledLinear => Ok(()),
            StepSize::Polynomial(w) if (0.0..=1.0).contains(&w) => Ok(()),
            StepSize::Polynomial(w) => Err(Error::InvalidArgument(format!(
                "polynomial step exponent {w} outside [0, 1]"
            ))),
        }
    }

    pub fn alpha(&self, k: u64, gamma: f64) -> f64 {
        match *self {
            StepSize::RescaledLinear => 1.0 / (1.0 + (1.0 - gamma) * k as f64),
            StepSize::Polynomial(w) => (k as f64).powf(-w),
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::RescaledLinear => write!(f, "rescaled"),
            StepSize::Polynomial(w) => write!(f, "poly:{w}"),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    /// Accepts `rescaled` or `poly:<ω>`.
    fn from_str(s: &str) -> Result<Self> {
        let parsed = match s.trim() {
            "rescaled" | "rescaled-linear" => StepSize::RescaledLinear,
            other => match other.strip_prefix("poly:") {
                Some(w) => StepSize::Polynomial(w.parse().map_err(|_| {
                    Error::InvalidArgument(format!("bad polynomial exponent in {s:?}"))
                })?),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown step size {s:?}; expected rescaled or poly:<omega>"
                    )))
                }
            },
        };
        parsed.validate()?;
        Ok(parsed)
    }
}

impl TryFrom<String> for StepSize {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StepSize> for String {
    fn from(s: StepSize) -> String {
        s.to_string()
    }
}

/// Epoch count, epoch length and re-centring batch sizes for one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub num_epochs: usize,
    pub epoch_length: u64,
    pub recenter_sizes: Vec<u64>,
    pub delta: f64,
    /// Constant actually used, after any down-scaling to fit the budget.
    pub c1: f64,
    pub c1_requested: f64,
    pub base: f64,
    pub budget: u64,
}

impl EpochSchedule {
    /// `Σ N_m + M K`.
    pub fn total_samples(&self) -> u64 {
        self.recenter_sizes.iter().sum::<u64>() + self.num_epochs as u64 * self.epoch_length
    }

    pub fn was_rescaled(&self) -> bool {
        self.c1 < self.c1_requested
    }
}

/// `N(1-γ)² / (8 ln((16D/δ) ln N))`, the argument of the logarithm that sets `M`.
pub fn schedule_log_argument(n: u64, gamma: f64, delta: f64, d: usize) -> f64 {
    let nf = n as f64;
    let inner = (16.0 * d as f64 / delta) * nf.ln();
    nf * (1.0 - gamma).powi(2) / (8.0 * inner.ln())
}

/// Smallest budget whose log argument reaches one.
pub fn min_feasible_budget(gamma: f64, delta: f64, d: usize) -> u64 {
    let ok = |n: u64| schedule_log_argument(n, gamma, delta, d) >= 1.0;
    let mut hi = 2u64;
    while !ok(hi) {
        hi = hi.saturating_mul(2);
        if hi == u64::MAX {
            return hi;
        }
    }
    let mut lo = hi / 2;
    // lo infeasible (or below 2), hi feasible
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Schedule with epoch-growth base 4.
pub fn make_schedule(n: u64, gamma: f64, delta: f64, d: usize, c1: f64) -> Result<EpochSchedule> {
    make_schedule_with_base(n, gamma, delta, d, c1, 4.0)
}

/// `M = max(1, ⌊log_b(arg)⌋)`, `K = ⌊N/(2M)⌋`,
/// `N_m = ⌈c₁ b^m/(1-γ)² · log_b(16MD/δ)⌉`.
///
/// When `Σ N_m + MK` exceeds `n`, `c₁` is shrunk to the largest value that
/// fits. Budgets whose log argument is below one are rejected.
pub fn make_schedule_with_base(
    n: u64,
    gamma: f64,
    delta: f64,
    d: usize,
    c1: f64,
    base: f64,
) -> Result<EpochSchedule> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("discount {gamma} outside (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("failure probability {delta} outside (0, 1)")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("state-action dimension must be positive".into()));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::InvalidArgument(format!("schedule constant {c1} must be positive")));
    }
    if !(base > 1.0 && base.is_finite()) {
        return Err(Error::InvalidArgument(format!("epoch base {base} must exceed 1")));
    }
    let arg = if n >= 2 {
        schedule_log_argument(n, gamma, delta, d)
    } else {
        0.0
    };
    if !(arg >= 1.0) {
        return Err(Error::ScheduleInfeasible {
            n,
            min_feasible: min_feasible_budget(gamma, delta, d),
        });
    }
    let num_epochs = ((arg.ln() / base.ln()).floor() as usize).max(1);
    let epoch_length = n / (2 * num_epochs as u64);
    let log_term = (16.0 * num_epochs as f64 * d as f64 / delta).ln() / base.ln();
    let sizes = |c: f64| -> Vec<u64> {
        (1..=num_epochs)
            .map(|m| {
                let raw = c * base.powi(m as i32) / (1.0 - gamma).powi(2) * log_term;
                (raw.ceil() as u64).max(1)
            })
            .collect()
    };
    let fits = |c: f64| {
        sizes(c)
            .iter()
            .try_fold(num_epochs as u64 * epoch_length, |acc, &v| acc.checked_add(v))
            .is_some_and(|t| t <= n)
    };
    let c1_used = if fits(c1) {
        c1
    } else {
        let (mut lo, mut hi) = (0.0, c1);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(EpochSchedule {
        num_epochs,
        epoch_length,
        recenter_sizes: sizes(c1_used),
        delta,
        c1: c1_used,
        c1_requested: c1,
        base,
        budget: n,
    })
}

/// One row of an error trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub iter: u64,
    pub samples_used: u64,
    pub err_linf: f64,
}

/// What to record while running.
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions<'q, T> {
    /// Reference `Q*`; enables error tracking.
    pub reference: Option<&'q QFunction<T>>,
    /// Record every `stride`-th iteration (and each epoch's last). `None`
    /// records epoch boundaries only.
    pub stride: Option<u64>,
}

impl<T> Default for TraceOptions<'_, T> {
    fn default() -> Self {
        Self {
            reference: None,
            stride: None,
        }
    }
}

impl<'q, T> TraceOptions<'q, T> {
    pub fn with_reference(reference: &'q QFunction<T>) -> Self {
        Self {
            reference: Some(reference),
            stride: None,
        }
    }

    pub fn stride(mut self, stride: u64) -> Self {
        self.stride = Some(stride.max(1));
        self
    }
}

/// Output of a Q-learning or VR-QL run.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct RunRecord<T> {
    pub seed: u64,
    pub budget: Option<u64>,
    pub samples_consumed: u64,
    pub warm_start_samples: u64,
    pub schedule: Option<EpochSchedule>,
    /// `Q̄_2, …, Q̄_{M+1}`; empty for plain Q-learning.
    pub epoch_outputs: Vec<QFunction<T>>,
    /// `‖Q̄_m - Q*‖∞` for `m = 1..=M+1`, when a reference is given.
    pub epoch_errors: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub final_error: Option<f64>,
    /// Whether `‖Q̄₁ - Q*‖∞ ≤ ‖r‖∞/√(1-γ)` held, when a reference is given.
    pub init_condition_met: Option<bool>,
}

impl<T: Scalar> RunRecord<T> {
    fn new(sampler: &SeededSampler<'_, T>) -> Self {
        Self {
            seed: sampler.seed(),
            budget: sampler.budget(),
            samples_consumed: 0,
            warm_start_samples: 0,
            schedule: None,
            epoch_outputs: Vec::new(),
            epoch_errors: Vec::new(),
            trace: Vec::new(),
            final_error: None,
            init_condition_met: None,
        }
    }

    /// Writes `epoch,iter,samples_used,err_linf`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.trace {
            w.serialize(row)?;
        }
        if self.trace.is_empty() {
            w.write_record(["epoch", "iter", "samples_used", "err_linf"])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Recorder<'q, T> {
    options: TraceOptions<'q, T>,
}

impl<T: Scalar> Recorder<'_, T> {
    fn error(&self, q: &QFunction<T>) -> Option<f64> {
        self.options
            .reference
            .map(|r| linf_distance(q, r).expect("shapes checked").to_f64_lossy())
    }

    fn step(&self, record: &mut RunRecord<T>, epoch: usize, iter: u64, last: bool, draws: u64, q: &QFunction<T>) {
        let Some(stride) = self.options.stride else { return };
        if !iter.is_multiple_of(stride) && !last {
            return;
        }
        if let Some(err) = self.error(q) {
            record.trace.push(TraceRow {
                epoch,
                iter,
                samples_used: draws,
                err_linf: err,
            });
        }
    }
}

/// `‖q0 - Q*‖∞ ≤ ‖r‖∞ / √(1-γ)`.
pub fn initialization_condition<T: Scalar>(
    mdp: &TabularMdp<T>,
    q0: &QFunction<T>,
    qstar: &QFunction<T>,
) -> Result<bool> {
    let radius = mdp.reward_table().linf_norm() / (T::one() - mdp.gamma()).sqrt();
    Ok(linf_distance(q0, qstar)? <= radius)
}

fn max_into<T: Scalar>(q: &QFunction<T>, out: &mut [T]) {
    let a = q.num_actions();
    for (o, row) in out.iter_mut().zip(q.values().chunks(a)) {
        *o = row.iter().copied().fold(T::neg_infinity(), T::max);
    }
}

fn check_start<T: Scalar>(sampler: &SeededSampler<'_, T>, q0: &QFunction<T>, trace: &TraceOptions<'_, T>) -> Result<()> {
    q0.check_shape(sampler.mdp())?;
    if let Some(r) = trace.reference {
        r.check_shape(sampler.mdp())?;
    }
    Ok(())
}

/// Synchronous Q-learning: `Q_{k+1} = (1-α_k) Q_k + α_k T̂_k(Q_k)` for `k = 1..=n`.
pub fn standard_q_learning<T: Scalar>(
    sampler: &mut SeededSampler<'_, T>,
    n: u64,
    q0: &QFunction<T>,
    stepsize: StepSize,
    trace: TraceOptions<'_, T>,
) -> Result<(QFunction<T>, RunRecord<T>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("Q-learning needs at least one iteration".into()));
    }
    stepsize.validate()?;
    check_start(sampler, q0, &trace)?;
    sampler.reserve(n)?;
    let mdp = sampler.mdp();
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let g = gamma.to_f64_lossy();
    let start = sampler.draws();
    let recorder = Recorder { options: trace };
    let mut record = RunRecord::new(sampler);

    let mut q = q0.clone();
    let mut v = vec![T::zero(); s];
    let mut target = vec![T::zero(); s * a];
    let mut sample = TransitionSample::empty(s, a);
    record.epoch_errors.extend(recorder.error(&q));
    for k in 1..=n {
        sampler.draw_into(&mut sample);
        max_into(&q, &mut v);
        sample.bellman_into(gamma, &v, &mut target);
        let alpha = T::of(stepsize.alpha(k, g));
        let keep = T::one() - alpha;
        for (qz, &tz) in q.values_mut().iter_mut().zip(&target) {
            *qz = keep * *qz + alpha * tz;
        }
        recorder.step(&mut record, 1, k, k == n, sampler.draws() - start, &q);
    }
    record.samples_consumed = sampler.draws() - start;
    record.final_error = recorder.error(&q);
    record.epoch_errors.extend(record.final_error);
    Ok((q, record))
}

/// Reference implementation of one re-centred update, allocating fresh tables.
///
/// `tbar` must come from draws independent of `sample`.
pub fn vr_update<T: Scalar>(
    mdp: &TabularMdp<T>,
    theta: &QFunction<T>,
    alpha: T,
    qbar: &QFunction<T>,
    tbar: &QFunction<T>,
    sample: &TransitionSample<T>,
) -> Result<QFunction<T>> {
    tbar.check_shape(mdp)?;
    let at_theta = empirical_bellman(sample, mdp, theta)?;
    let at_bar = empirical_bellman(sample, mdp, qbar)?;
    let keep = T::one() - alpha;
    Ok(QFunction::from_fn(mdp.num_states(), mdp.num_actions(), |x, u| {
        keep * theta.get(x, u) + alpha * (at_theta.get(x, u) - at_bar.get(x, u) + tbar.get(x, u))
    }))
}

/// One epoch: `T̄ = ` mean of `n_m` fresh empirical Bellman applications at
/// `qbar`, then `k_steps` re-centred updates starting from `θ₁ = qbar`.
///
/// Consumes exactly `n_m + k_steps` draws.
pub fn run_epoch<T: Scalar>(
    sampler: &mut SeededSampler<'_, T>,
    qbar: &QFunction<T>,
    k_steps: u64,
    n_m: u64,
    stepsize: StepSize,
) -> Result<QFunction<T>> {
    stepsize.validate()?;
    check_start(sampler, qbar, &TraceOptions::default())?;
    let mut scratch = RunRecord::new(sampler);
    run_epoch_traced(
        sampler,
        qbar,
        k_steps,
        n_m,
        stepsize,
        &Recorder {
            options: TraceOptions::default(),
        },
        &mut scratch,
        1,
        sampler.draws(),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_epoch_traced<T: Scalar>(
    sampler: &mut SeededSampler<'_, T>,
    qbar: &QFunction<T>,
    k_steps: u64,
    n_m: u64,
    stepsize: StepSize,
    recorder: &Recorder<'_, T>,
    record: &mut RunRecord<T>,
    epoch: usize,
    run_start: u64,
) -> Result<QFunction<T>> {
    sampler.reserve(n_m.saturating_add(k_steps))?;
    let mdp = sampler.mdp();
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let g = gamma.to_f64_lossy();

    let tbar = monte_carlo_bellman(sampler, qbar, n_m)?;
    let vbar = qbar.max_per_state();
    let mut theta = qbar.clone();
    recorder.step(record, epoch, 0, k_steps == 0, sampler.draws() - run_start, &theta);

    let mut v = vec![T::zero(); s];
    let mut sample = TransitionSample::empty(s, a);
    for k in 1..=k_steps {
        sampler.draw_into(&mut sample);
        max_into(&theta, &mut v);
        let alpha = T::of(stepsize.alpha(k, g));
        let keep = T::one() - alpha;
        for ((th, &xn), &tb) in theta
            .values_mut()
            .iter_mut()
            .zip(sample.next_states())
            .zip(tbar.values())
        {
            // rewards cancel between T̂_k(θ) and T̂_k(Q̄)
            let target = gamma * (v[xn] - vbar[xn]) + tb;
            *th = keep * *th + alpha * target;
        }
        recorder.step(record, epoch, k, k == k_steps, sampler.draws() - run_start, &theta);
    }
    Ok(theta)
}

/// Runs every epoch of `schedule`, threading `Q̄_{m+1}` = output of epoch `m`.
pub fn vr_q_learning<T: Scalar>(
    sampler: &mut SeededSampler<'_, T>,
    schedule: &EpochSchedule,
    q0: &QFunction<T>,
    stepsize: StepSize,
    trace: TraceOptions<'_, T>,
) -> Result<(QFunction<T>, RunRecord<T>)> {
    stepsize.validate()?;
    check_start(sampler, q0, &trace)?;
    if schedule.recenter_sizes.len() != schedule.num_epochs {
        return Err(Error::InvalidArgument(format!(
            "schedule lists {} re-centring sizes for {} epochs",
            schedule.recenter_sizes.len(),
            schedule.num_epochs
        )));
    }
    let start = sampler.draws();
    let recorder = Recorder { options: trace };
    let mut record = RunRecord::new(sampler);
    record.schedule = Some(schedule.clone());
    if let Some(r) = trace.reference {
        record.init_condition_met = Some(initialization_condition(sampler.mdp(), q0, r)?);
    }
    record.epoch_errors.extend(recorder.error(q0));

    let mut qbar = q0.clone();
    for (m, &n_m) in schedule.recenter_sizes.iter().enumerate() {
        qbar = run_epoch_traced(
            sampler,
            &qbar,
            schedule.epoch_length,
            n_m,
            stepsize,
            &recorder,
            &mut record,
            m + 1,
            start,
        )?;
        record.epoch_errors.extend(recorder.error(&qbar));
        record.epoch_outputs.push(qbar.clone());
    }
    record.samples_consumed = sampler.draws() - start;
    record.final_error = recorder.error(&qbar);
    Ok((qbar, record))
}

/// Everything needed to turn a budget into a VR-QL run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VrqlConfig {
    pub delta: f64,
    pub c1: f64,
    pub base: f64,
    pub stepsize: StepSize,
    /// Fraction of the budget spent producing the initial point.
    pub warm_start: Option<f64>,
}

impl Default for VrqlConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            c1: 1.0,
            base: 4.0,
            stepsize: StepSize::RescaledLinear,
            warm_start: None,
        }
    }
}

/// VR-QL on a budget of `n` draws from `q0 = 0`.
///
/// With `warm_start = Some(f)`, the first `⌊f n⌋` draws run VR-QL on their own
/// schedule (plain Q-learning if that budget admits none) and its output is
/// the initial point for the main run on the remaining draws.
pub fn run_vrql<T: Scalar>(
    mdp: &TabularMdp<T>,
    n: u64,
    seed: u64,
    config: &VrqlConfig,
    trace: TraceOptions<'_, T>,
) -> Result<(QFunction<T>, RunRecord<T>)> {
    config.stepsize.validate()?;
    let mut sampler = SeededSampler::new(mdp, seed).with_budget(n);
    let mut q0 = QFunction::zeros_like(mdp);
    let mut warm = 0;
    if let Some(fraction) = config.warm_start {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "warm-start fraction {fraction} outside [0, 1)"
            )));
        }
        warm = (fraction * n as f64).floor() as u64;
        if warm > 0 {
            q0 = match make_schedule_with_base(warm, mdp.gamma().to_f64_lossy(), config.delta, mdp.dim(), config.c1, config.base) {
                Ok(schedule) => vr_q_learning(&mut sampler, &schedule, &q0, config.stepsize, TraceOptions::default())?.0,
                Err(Error::ScheduleInfeasible { .. }) => {
                    standard_q_learning(&mut sampler, warm, &q0, config.stepsize, TraceOptions::default())?.0
                }
                Err(e) => return Err(e),
            };
            warm = sampler.draws();
        }
    }
    let schedule = make_schedule_with_base(
        n - warm,
        mdp.gamma().to_f64_lossy(),
        config.delta,
        mdp.dim(),
        config.c1,
        config.base,
    )?;
    let (q, mut record) = vr_q_learning(&mut sampler, &schedule, &q0, config.stepsize, trace)?;
    record.warm_start_samples = warm;
    record.samples_consumed += warm;
    record.budget = Some(n);
    Ok((q, record))
}

/// Plain Q-learning on `n` draws from `q0 = 0`.
pub fn run_ql<T: Scalar>(
    mdp: &TabularMdp<T>,
    n: u64,
    seed: u64,
    stepsize: StepSize,
    trace: TraceOptions<'_, T>,
) -> Result<(QFunction<T>, RunRecord<T>)> {
    let mut sampler = SeededSampler::new(mdp, seed).with_budget(n);
    standard_q_learning(&mut sampler, n, &QFunction::zeros_like(mdp), stepsize, trace)
}

/// Fixed point of `J(Q) = T(Q) - T(Q̄) + T̄(Q̄)`, i.e. `Q*` of the MDP with
/// rewards shifted by `T̄(Q̄) - T(Q̄)`; `‖J(Q̂) - Q̂‖∞ ≤ tol`.
pub fn shifted_fixed_point<T: Scalar>(
    mdp: &TabularMdp<T>,
    qbar: &QFunction<T>,
    tbar: &QFunction<T>,
    tol: T,
) -> Result<QFunction<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    tbar.check_shape(mdp)?;
    let t_qbar = crate::mdp::bellman_optimality(mdp, qbar)?;
    let shifted = mdp.reward_table().zip_map(&tbar.zip_map(&t_qbar, |a, b| a - b), |r, d| r + d);
    solve_optimal_q(&mdp.with_rewards(&shifted)?, tol)
}
