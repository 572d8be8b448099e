//! `zoh run`: seeded multi-trial comparisons.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use zoh_core::{
    zo_hgd, zo_scd, zo_sgd, zo_signsgd, Error, HgdConfig, Objective, RunTrace, StepSchedule,
};

use crate::config::{ExperimentConfig, MethodKind, MethodSpec};
use crate::problem::Problem;
use crate::{median, with_objective, CliError};

pub const TRACE_COLUMNS: &str =
    "t,f_value,grad_norm_sq,alpha,eta,realized_I_size,actual_queries,nominal_fqc";
pub const SUMMARY_COLUMNS: &str =
    "method,trial,final_objective,best_grad_norm_sq,total_actual_queries,total_nominal_fqc,queries_to_threshold,wall_time_s";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; all cores when `None`.
    pub jobs: Option<usize>,
    /// Overrides the config's output directory.
    pub out: Option<PathBuf>,
    pub format: TraceFormat,
}

/// One finished trial.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub method: String,
    pub trial: usize,
    pub seed: u64,
    pub step: StepSchedule,
    /// `None` when the run diverged (only tolerated while searching a grid).
    pub trace: Option<RunTrace>,
    pub final_objective: f64,
    pub queries_to_threshold: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub method: String,
    pub step: f64,
    pub successes: usize,
    pub median_queries_to_threshold: f64,
    pub median_final_objective: f64,
    pub selected: bool,
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Selected trials, grouped by method in config order.
    pub trials: Vec<TrialResult>,
    pub grid: Vec<GridPoint>,
}

impl RunOutput {
    pub fn method_trials<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a TrialResult> {
        self.trials.iter().filter(move |t| t.method == method)
    }
}

fn dispatch<O: Objective>(
    obj: &O,
    kind: MethodKind,
    x0: &[f64],
    cfg: &HgdConfig,
) -> zoh_core::Result<RunTrace> {
    match kind {
        MethodKind::ZoHgd => zo_hgd(obj, x0, cfg),
        MethodKind::ZoSgd => zo_sgd(obj, x0, cfg),
        MethodKind::ZoScd => zo_scd(obj, x0, cfg),
        MethodKind::ZoSignsgd => zo_signsgd(obj, x0, cfg),
    }
}

/// First recorded `t` (1-based) at which the run counts as successful.
fn first_success(problem: &Problem, trace: &RunTrace, threshold: Option<f64>) -> Option<usize> {
    match problem {
        Problem::Attack {
            attack,
            success_images: Some(k),
        } => trace
            .iterates
            .as_ref()?
            .iter()
            .position(|x| attack.misclassified_count(x) >= *k)
            .map(|i| i + 1),
        _ => {
            let thr = threshold?;
            trace
                .records
                .iter()
                .position(|r| r.f_value.is_some_and(|f| f <= thr))
                .map(|i| i + 1)
        }
    }
}

fn value_at<O: Objective>(obj: &O, x: &[f64]) -> f64 {
    obj.exact().map_or(f64::NAN, |o| o.value(x))
}

struct Task {
    method: usize,
    step: usize,
    trial: usize,
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let problem = Problem::build(&cfg.objective)?;
    let d = problem.dimension();
    let x0 = cfg.x0.materialize(d)?;
    let needs_iterates = matches!(
        problem,
        Problem::Attack {
            success_images: Some(_),
            ..
        }
    );

    // Resolve and validate every configuration before running anything.
    let mut plans: Vec<(Vec<StepSchedule>, Vec<Vec<HgdConfig>>)> = Vec::new();
    for m in &cfg.methods {
        let steps = m.steps()?;
        let mut per_step = Vec::new();
        for step in &steps {
            let mut per_trial = Vec::new();
            for trial in 0..cfg.trials {
                let seed = cfg.base_seed.wrapping_add(trial as u64);
                let mut hc = m.hgd_config(d, step.clone(), seed, problem.metadata())?;
                hc.record_iterates = needs_iterates;
                hc.validate(d)
                    .map_err(|e| CliError::config(format!("method `{}`: {e}", m.name)))?;
                if matches!(hc.step, StepSchedule::NonconvexBound)
                    && problem.metadata().lipschitz.is_none()
                {
                    return Err(CliError::config(format!(
                        "method `{}`: nonconvex_bound needs a known Lipschitz constant",
                        m.name
                    )));
                }
                if m.method == MethodKind::ZoSignsgd && hc.rge.is_none() {
                    return Err(CliError::config(format!(
                        "method `{}`: zo_signsgd needs n_r ≥ 1",
                        m.name
                    )));
                }
                per_trial.push(hc);
            }
            per_step.push(per_trial);
        }
        plans.push((steps, per_step));
    }

    let tasks: Vec<Task> = plans
        .iter()
        .enumerate()
        .flat_map(|(mi, (steps, _))| {
            (0..steps.len()).flat_map(move |si| {
                (0..cfg.trials).map(move |trial| Task {
                    method: mi,
                    step: si,
                    trial,
                })
            })
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let results: Vec<Result<TrialResult, CliError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let spec = &cfg.methods[task.method];
                let hc = &plans[task.method].1[task.step][task.trial];
                let searching = spec.lr_grid.is_some();
                let trace = with_objective!(&problem, obj => dispatch(obj, spec.method, &x0, hc));
                let trace = match trace {
                    Ok(t) => Some(t),
                    Err(Error::Diverged { .. }) if searching => None,
                    Err(e) => {
                        return Err(CliError::runtime(format!(
                            "method `{}` trial {}: {e}",
                            spec.name, task.trial
                        )))
                    }
                };
                let (final_objective, queries_to_threshold) = match &trace {
                    Some(t) => (
                        with_objective!(&problem, obj => value_at(obj, &t.output)),
                        first_success(&problem, t, cfg.report.threshold)
                            .map(|k| t.records[k - 1].actual_queries),
                    ),
                    None => (f64::INFINITY, None),
                };
                Ok(TrialResult {
                    method: spec.name.clone(),
                    trial: task.trial,
                    seed: hc.seed,
                    step: hc.step.clone(),
                    trace,
                    final_objective,
                    queries_to_threshold,
                })
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let (trials, grid) = select(cfg, &plans, results)?;
    let dir = opts.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    write_outputs(cfg, &dir, &trials, &grid, opts.format)?;
    Ok(RunOutput { dir, trials, grid })
}

fn step_value(step: &StepSchedule) -> f64 {
    match step {
        StepSchedule::Constant(eta) => *eta,
        _ => f64::NAN,
    }
}

/// Keeps, for each method, the trials of its best step size.
///
/// Ranking: most successes, then smallest median final objective, then
/// smallest median queries-to-threshold (unreached counts as infinite).
fn select(
    cfg: &ExperimentConfig,
    plans: &[(Vec<StepSchedule>, Vec<Vec<HgdConfig>>)],
    results: Vec<TrialResult>,
) -> Result<(Vec<TrialResult>, Vec<GridPoint>), CliError> {
    let mut chunks = results.into_iter();
    let mut kept = Vec::new();
    let mut grid = Vec::new();
    for (m, (steps, _)) in cfg.methods.iter().zip(plans) {
        let mut candidates: Vec<Vec<TrialResult>> = Vec::new();
        for _ in steps {
            candidates.push(chunks.by_ref().take(cfg.trials).collect());
        }
        if m.lr_grid.is_none() {
            kept.extend(candidates.pop().expect("one step"));
            continue;
        }
        let score = |trials: &[TrialResult]| {
            let successes = trials
                .iter()
                .filter(|t| t.queries_to_threshold.is_some())
                .count();
            let qtt: Vec<f64> = trials
                .iter()
                .map(|t| t.queries_to_threshold.map_or(f64::INFINITY, |q| q as f64))
                .collect();
            let fin: Vec<f64> = trials.iter().map(|t| t.final_objective).collect();
            (successes, median(&qtt), median(&fin))
        };
        let scores: Vec<_> = candidates.iter().map(|c| score(c)).collect();
        let best = (0..scores.len())
            .filter(|&i| candidates[i].iter().all(|t| t.trace.is_some()))
            .min_by(|&a, &b| {
                let (sa, qa, fa) = scores[a];
                let (sb, qb, fb) = scores[b];
                sb.cmp(&sa).then(fa.total_cmp(&fb)).then(qa.total_cmp(&qb))
            })
            .ok_or_else(|| {
                CliError::runtime(format!("method `{}`: every step size diverged", m.name))
            })?;
        for (i, (s, q, f)) in scores.iter().enumerate() {
            grid.push(GridPoint {
                method: m.name.clone(),
                step: step_value(&steps[i]),
                successes: *s,
                median_queries_to_threshold: *q,
                median_final_objective: *f,
                selected: i == best,
            });
        }
        kept.extend(candidates.swap_remove(best));
    }
    Ok((kept, grid))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

/// Rows kept by the stride: every `stride`-th iteration and the last one.
fn strided(trace: &RunTrace, stride: usize) -> impl Iterator<Item = &zoh_core::RunRecord> {
    let last = trace.records.len();
    trace
        .records
        .iter()
        .filter(move |r| r.t % stride == 0 || r.t == last)
}

pub fn trace_csv(cfg_hash: &str, t: &TrialResult, trace: &RunTrace, stride: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_sha256: {cfg_hash}");
    let _ = writeln!(s, "# method: {}", t.method);
    let _ = writeln!(s, "# trial: {}", t.trial);
    let _ = writeln!(s, "# seed: {}", t.seed);
    let _ = writeln!(
        s,
        "# step: {}",
        serde_json::to_string(&t.step).expect("step serializes")
    );
    s.push_str(TRACE_COLUMNS);
    s.push('\n');
    for r in strided(trace, stride) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.t,
            opt(r.f_value),
            opt(r.grad_norm_sq),
            r.alpha,
            r.eta,
            r.realized_i_size,
            r.actual_queries,
            r.nominal_fqc
        );
    }
    s
}

#[derive(Serialize)]
struct JsonRow {
    t: usize,
    f_value: Option<f64>,
    grad_norm_sq: Option<f64>,
    alpha: f64,
    eta: f64,
    #[serde(rename = "realized_I_size")]
    realized_i_size: usize,
    actual_queries: u64,
    nominal_fqc: u64,
}

pub fn trace_jsonl(cfg_hash: &str, t: &TrialResult, trace: &RunTrace, stride: usize) -> String {
    let header = serde_json::json!({
        "config_sha256": cfg_hash,
        "method": t.method,
        "trial": t.trial,
        "seed": t.seed,
        "step": t.step,
    });
    let mut s = header.to_string();
    s.push('\n');
    for r in strided(trace, stride) {
        let row = JsonRow {
            t: r.t,
            f_value: r.f_value,
            grad_norm_sq: r.grad_norm_sq,
            alpha: r.alpha,
            eta: r.eta,
            realized_i_size: r.realized_i_size,
            actual_queries: r.actual_queries,
            nominal_fqc: r.nominal_fqc,
        };
        s.push_str(&serde_json::to_string(&row).expect("row serializes"));
        s.push('\n');
    }
    s
}

pub fn summary_csv(cfg: &ExperimentConfig, trials: &[TrialResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# objective: {}",
        serde_json::to_string(&cfg.objective).expect("spec serializes")
    );
    let _ = writeln!(s, "# config_sha256: {}", cfg.hash());
    s.push_str(SUMMARY_COLUMNS);
    s.push('\n');
    for t in trials {
        let trace = t.trace.as_ref().expect("selected trials completed");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            t.method,
            t.trial,
            t.final_objective,
            opt(trace.min_grad_norm_sq()),
            trace.totals.actual_evaluations,
            trace.totals.nominal_fqc,
            t.queries_to_threshold
                .map(|q| q.to_string())
                .unwrap_or_default(),
            trace.wall_time_s
        );
    }
    s
}

fn write_outputs(
    cfg: &ExperimentConfig,
    dir: &Path,
    trials: &[TrialResult],
    grid: &[GridPoint],
    format: TraceFormat,
) -> Result<(), CliError> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|e| io_err(&traces, e))?;
    let hash = cfg.hash();
    for t in trials {
        let trace = t.trace.as_ref().expect("selected trials completed");
        let (body, ext) = match format {
            TraceFormat::Csv => (trace_csv(&hash, t, trace, cfg.report.stride), "csv"),
            TraceFormat::Jsonl => (trace_jsonl(&hash, t, trace, cfg.report.stride), "jsonl"),
        };
        let path = traces.join(format!("{}_trial{}.{ext}", t.method, t.trial));
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    }
    let path = dir.join("summary.csv");
    fs::write(&path, summary_csv(cfg, trials)).map_err(|e| io_err(&path, e))?;
    if !grid.is_empty() {
        let mut s = String::from(
            "method,step,successes,median_queries_to_threshold,median_final_objective,selected\n",
        );
        for g in grid {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                g.method,
                g.step,
                g.successes,
                g.median_queries_to_threshold,
                g.median_final_objective,
                g.selected
            );
        }
        let path = dir.join("lr_selection.csv");
        fs::write(&path, s).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Applies the `ZOH_SEED` override, if set.
pub fn apply_seed_override(cfg: &mut ExperimentConfig) -> Result<(), CliError> {
    if let Ok(v) = std::env::var("ZOH_SEED") {
        cfg.base_seed = v
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("ZOH_SEED: `{v}` is not an unsigned integer")))?;
    }
    Ok(())
}

/// The method spec with a given name.
pub fn method<'a>(cfg: &'a ExperimentConfig, name: &str) -> Option<&'a MethodSpec> {
    cfg.methods.iter().find(|m| m.name == name)
}
