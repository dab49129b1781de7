//! `vrql` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 runtime failure
//! (budget or schedule).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use vrql::complexity::InstanceAnalysis;
use vrql::harness::{
    epoch_trace_experiment, example1_mdp, example1_qstar, fit_loglog_slope, read_rows_csv, render_scaling_svg,
    render_trace_svg, scaling_experiment, write_rows_csv, ExperimentConfig,
};
use vrql::lowerbound::{
    explore_construction, local_minimax_bound, perturb_rewards_with, perturb_transitions_with, verify_lemma3,
    PerturbationReport, DEFAULT_BOUND_CONSTANT,
};
use vrql::mdp::{greedy_policy, linf_distance};
use vrql::solver::{run_ql, run_vrql, TraceOptions};
use vrql::{Error, ErrorKind, Mdp, StepSize, VrqlConfig};

#[derive(Parser)]
#[command(name = "vrql", version, about = "Instance-dependent Q-learning toolkit for tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal Q-function, an optimal policy, the optimality gap and N₀.
    Solve {
        mdp: PathBuf,
        /// Write the JSON result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local complexity functionals at the ν-maximising optimal policy.
    Complexity {
        mdp: PathBuf,
        /// Per-pair CSV (`x,u,nu,rho,sigma,phi_sq`) destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the full report as JSON instead of CSV.
        #[arg(long)]
        json: bool,
    },
    /// Synchronous Q-learning on a fixed budget.
    RunQl {
        mdp: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Variance-reduced Q-learning on a fixed budget.
    RunVrql {
        mdp: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
    /// Hardest local alternatives and the construction checks at sample size n.
    Lowerbound {
        mdp: PathBuf,
        /// Sample size; must be at least N₀ unless --explore is given.
        #[arg(long)]
        n: u64,
        /// Constant in front of max ‖ν‖∞.
        #[arg(long, default_value_t = DEFAULT_BOUND_CONSTANT)]
        constant: f64,
        /// Skip the sample-size precondition and report clauses only.
        #[arg(long)]
        explore: bool,
        /// Clause CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the two-state Example 1 instance and print its closed forms.
    Example1 {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        lambda: f64,
        /// MDP JSON destination; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaling experiment from a JSON config; writes rows CSV and SVG plots.
    Experiment {
        config: PathBuf,
        /// Output directory for rows.csv, scaling.svg, trace.csv and trace.svg.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also run the single-discount trace experiment.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        schedule: ScheduleOverrides,
    },
    /// Least-squares slope of log error against log 1/(1-γ) from a rows CSV.
    Fit { rows: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Total number of generative-model draws.
    #[arg(long)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `rescaled` or `poly:<omega>`.
    #[arg(long, default_value = "rescaled", value_parser = parse_stepsize)]
    stepsize: StepSize,
    /// Per-iteration error trace CSV (`epoch,iter,samples_used,err_linf`).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record every k-th iteration in the trace.
    #[arg(long, default_value_t = 1)]
    stride: u64,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// Epoch-growth base b in N_m ∝ b^m.
    #[arg(long, default_value_t = 4.0)]
    base: f64,
    /// Fraction of the budget spent on a warm start.
    #[arg(long)]
    warm_start: Option<f64>,
}

#[derive(Args)]
struct ScheduleOverrides {
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    base: Option<f64>,
    #[arg(long)]
    warm_start: Option<f64>,
    #[arg(long, value_parser = parse_stepsize)]
    stepsize: Option<StepSize>,
}

fn parse_stepsize(s: &str) -> Result<StepSize, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Runtime => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn load_mdp(path: &Path) -> CliResult<Mdp> {
    Mdp::load(path).map_err(|e| invalid(format!("cannot load MDP {}: {e}", path.display())))
}

/// Writes to `path`, or stdout when `None`.
fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(value: &Value, path: Option<&Path>) -> CliResult {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn solve(path: &Path, out: Option<&Path>) -> CliResult {
    let mdp = load_mdp(path)?;
    let analysis = InstanceAnalysis::new(&mdp)?;
    let n0 = analysis.min_sample_size()?;
    emit_json(
        &json!({
            "qstar": analysis.qstar(),
            "policy": greedy_policy(analysis.qstar(), 0.0),
            "optimal_actions": analysis.optimal_actions(),
            "gap": finite(analysis.optimality_gap()),
            "n_zero": finite(n0.value),
            "n_zero_discount_branch": n0.discount_branch,
            "n_zero_transition_branch": finite(n0.transition_branch),
        }),
        out,
    )
}

fn complexity(path: &Path, out: Option<&Path>, as_json: bool) -> CliResult {
    let mdp = load_mdp(path)?;
    let report = InstanceAnalysis::new(&mdp)?.report()?;
    if as_json {
        emit_json(&serde_json::to_value(&report).map_err(Error::from)?, out)
    } else {
        let mut w = sink(out)?;
        report.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

fn run(path: &Path, args: &RunArgs, schedule: Option<&ScheduleArgs>) -> CliResult {
    let mdp = load_mdp(path)?;
    let qstar = InstanceAnalysis::new(&mdp)?.qstar().clone();
    let trace = match args.trace {
        Some(_) => TraceOptions::with_reference(&qstar).stride(args.stride),
        None => TraceOptions::with_reference(&qstar),
    };
    let (q, record) = match schedule {
        Some(s) => {
            let config = VrqlConfig {
                delta: s.delta,
                c1: s.c1,
                base: s.base,
                stepsize: args.stepsize,
                warm_start: s.warm_start,
            };
            run_vrql(&mdp, args.budget, args.seed, &config, trace)?
        }
        None => run_ql(&mdp, args.budget, args.seed, args.stepsize, trace)?,
    };
    if let Some(p) = &args.trace {
        record.write_trace_csv(File::create(p)?)?;
    }
    emit_json(
        &json!({
            "final_error": linf_distance(&q, &qstar)?,
            "samples_consumed": record.samples_consumed,
            "warm_start_samples": record.warm_start_samples,
            "budget": args.budget,
            "seed": args.seed,
            "schedule": record.schedule,
            "epoch_errors": record.epoch_errors,
            "init_condition_met": record.init_condition_met,
            "q": q,
        }),
        None,
    )
}

fn perturbation_json(r: &PerturbationReport<f64>) -> Value {
    json!({
        "policy": r.policy,
        "z_bar": r.z_bar,
        "hellinger": r.hellinger,
        "hellinger_threshold": r.hellinger_threshold(),
        "hellinger_ok": r.hellinger_ok(),
        "opnorm_gap": r.opnorm_gap,
        "frobenius_gap": r.frobenius_gap,
        "q_gap_scaled": r.q_gap_scaled,
        "gap_lower_bound": r.gap_constant * r.target_functional,
        "gap_ok": r.gap_ok(),
    })
}

fn lowerbound(path: &Path, n: u64, constant: f64, explore: bool, out: Option<&Path>) -> CliResult {
    let mdp = load_mdp(path)?;
    let report = if explore {
        explore_construction(&mdp, n)?
    } else {
        verify_lemma3(&mdp, n)?
    };
    if let Some(p) = out {
        report.write_csv(File::create(p)?)?;
    }
    let analysis = InstanceAnalysis::new(&mdp)?;
    let mut value = json!({
        "n": n,
        "n_zero": finite(report.min_sample_size),
        "all_clauses_pass": report.all_pass(),
        "clauses": report.clauses,
    });
    if !explore {
        value["local_minimax_bound"] = json!(local_minimax_bound(&mdp, n, constant)?);
        value["bound_constant"] = json!(constant);
        value["transitions"] = perturbation_json(&perturb_transitions_with(&analysis, n)?);
        if mdp.reward_noise() > 0.0 {
            value["rewards"] = perturbation_json(&perturb_rewards_with(&analysis, n)?);
        }
    }
    emit_json(&value, None)
}

fn example1(gamma: f64, lambda: f64, out: Option<&Path>) -> CliResult {
    let mdp = example1_mdp(gamma, lambda)?;
    let qstar = example1_qstar(gamma, lambda)?;
    match out {
        Some(p) => mdp.save(p)?,
        None => println!("{}", mdp.to_json_string()?),
    }
    let p = (4.0 * gamma - 1.0) / (3.0 * gamma);
    let tau = 1.0 - (1.0 - gamma).powf(lambda);
    let report = InstanceAnalysis::with_qstar(&mdp, qstar.clone()).report()?;
    let summary = json!({
        "gamma": gamma,
        "lambda": lambda,
        "p": p,
        "tau": tau,
        "qstar": qstar,
        "max_nu_inf": report.max_nu_inf,
        "gap": finite(report.gap),
    });
    // with the MDP on stdout, the closed forms go to stderr
    if out.is_some() {
        emit_json(&summary, None)
    } else {
        eprintln!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
        Ok(())
    }
}

fn experiment(
    path: &Path,
    out: Option<&Path>,
    trials: Option<usize>,
    seed: Option<u64>,
    trace: bool,
    overrides: &ScheduleOverrides,
) -> CliResult {
    let mut config = ExperimentConfig::load(path)
        .map_err(|e| invalid(format!("cannot load config {}: {e}", path.display())))?;
    if let Some(t) = trials {
        config.trials = t;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.delta = overrides.delta.unwrap_or(config.delta);
    config.c1 = overrides.c1.unwrap_or(config.c1);
    config.base = overrides.base.unwrap_or(config.base);
    config.warm_start = overrides.warm_start.or(config.warm_start);
    config.stepsize = overrides.stepsize.unwrap_or(config.stepsize);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        config.rows_csv = Some(dir.join("rows.csv"));
        config.plot_svg = Some(dir.join("scaling.svg"));
        config.trace_csv = Some(dir.join("trace.csv"));
    }
    config.validate()?;

    let outcome = scaling_experiment(&config)?;
    let rows_path = config.rows_csv.clone().unwrap_or_else(|| PathBuf::from("rows.csv"));
    write_rows_csv(&outcome.rows, File::create(&rows_path)?)?;
    let fit = if config.gamma_grid.len() >= 2 && !outcome.rows.is_empty() {
        fit_loglog_slope(&outcome.rows).ok()
    } else {
        None
    };
    if let (Some(svg), false) = (&config.plot_svg, outcome.rows.is_empty()) {
        std::fs::write(svg, render_scaling_svg(&outcome.rows, config.lambda)?)?;
    }
    let mut trace_path = None;
    if trace {
        let record = epoch_trace_experiment(&config)?;
        let p = config.trace_csv.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
        record.write_trace_csv(File::create(&p)?)?;
        if !record.trace.is_empty() {
            std::fs::write(p.with_extension("svg"), render_trace_svg(&record.trace)?)?;
        }
        trace_path = Some(p);
    }
    emit_json(
        &json!({
            "rows": outcome.rows.len(),
            "flagged": outcome.flagged,
            "rows_csv": rows_path,
            "plot_svg": config.plot_svg,
            "trace_csv": trace_path,
            "fit": fit,
        }),
        None,
    )
}

fn fit(path: &Path) -> CliResult {
    let file = File::open(path).map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))?;
    let rows = read_rows_csv(file)?;
    let fit = fit_loglog_slope(&rows)?;
    emit_json(&serde_json::to_value(&fit).map_err(Error::from)?, None)
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Solve { mdp, out } => solve(&mdp, out.as_deref()),
        Command::Complexity { mdp, out, json } => complexity(&mdp, out.as_deref(), json),
        Command::RunQl { mdp, run: args } => run(&mdp, &args, None),
        Command::RunVrql { mdp, run: args, schedule } => run(&mdp, &args, Some(&schedule)),
        Command::Lowerbound {
            mdp,
            n,
            constant,
            explore,
            out,
        } => lowerbound(&mdp, n, constant, explore, out.as_deref()),
        Command::Example1 { gamma, lambda, out } => example1(gamma, lambda, out.as_deref()),
        Command::Experiment {
            config,
            out,
            trials,
            seed,
            trace,
            schedule,
        } => experiment(&config, out.as_deref(), trials, seed, trace, &schedule),
        Command::Fit { rows } => fit(&rows),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
