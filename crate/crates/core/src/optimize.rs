//! ZO-HGD and the baselines that reduce to it.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dimension, Error, Result};
use crate::estimators::{
    cge_sampled, hge, rge, CgeConfig, EstimatorKind, GradientEstimate, RgeConfig,
};
use crate::importance::{
    optimal_alpha, sample_coordinate_set, sparsification_probabilities, AlphaPolicy,
    ProbabilityVector, PROBABILITY_FLOOR,
};
use crate::objectives::{Counted, Objective, QueryCounter};
use crate::rng;

/// Iterates with a norm beyond this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    Constant(f64),
    /// η = (1/(24L))·min{3c, 1/d_nr} from the objective's Lipschitz constant.
    NonconvexBound,
    /// η_t = 8/(σ̄(a+t)).
    ScDecay {
        a: f64,
        sigma_bar: f64,
    },
}

/// Coordinate budget n_{c,t}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordBudget {
    Fixed(usize),
    /// One entry per iteration.
    Schedule(Vec<usize>),
}

impl CoordBudget {
    fn at(&self, t: usize) -> usize {
        match self {
            CoordBudget::Fixed(n) => *n,
            CoordBudget::Schedule(v) => v[t],
        }
    }

    fn entries(&self, iterations: usize) -> Vec<usize> {
        (0..iterations).map(|t| self.at(t)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSampling {
    /// Probabilities from the RGE probe.
    Importance,
    /// `p_i = n_c/d`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRule {
    /// Uniform draw from `x_1..x_T`.
    UniformRandomIterate,
    LastIterate,
    /// `Σ (a+t)² x_t / Σ (a+t)²` over `t = 0..T−1`.
    WeightedAverage {
        a: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgdConfig {
    pub iterations: usize,
    pub step: StepSchedule,
    pub rge: Option<RgeConfig>,
    pub cge: Option<CgeConfig>,
    pub coord_budget: CoordBudget,
    pub sampling: CoordinateSampling,
    pub alpha: AlphaPolicy,
    pub output: OutputRule,
    /// Lower clip applied to every selection probability.
    pub min_probability: f64,
    pub seed: u64,
    /// Keep every iterate `x_1..x_T` in the trace.
    pub record_iterates: bool,
}

impl HgdConfig {
    /// A ZO-HGD configuration with importance sampling, α*, and a uniformly drawn output.
    pub fn new(
        iterations: usize,
        step: StepSchedule,
        rge: RgeConfig,
        cge: CgeConfig,
        n_c: usize,
        seed: u64,
    ) -> Self {
        Self {
            iterations,
            step,
            rge: Some(rge),
            cge: Some(cge),
            coord_budget: CoordBudget::Fixed(n_c),
            sampling: CoordinateSampling::Importance,
            alpha: AlphaPolicy::Optimal,
            output: OutputRule::UniformRandomIterate,
            min_probability: PROBABILITY_FLOOR,
            seed,
            record_iterates: false,
        }
    }

    pub fn n_r(&self) -> usize {
        self.rge.as_ref().map_or(0, |r| r.n_r)
    }

    /// Checks the configuration against a problem of dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be positive"));
        }
        if let Some(r) = &self.rge {
            r.validate()?;
        }
        if let CoordBudget::Schedule(v) = &self.coord_budget {
            if v.len() != self.iterations {
                return Err(Error::invalid(
                    "coord_budget",
                    format!(
                        "schedule has {} entries for {} iterations",
                        v.len(),
                        self.iterations
                    ),
                ));
            }
        }
        let budgets = self.coord_budget.entries(self.iterations);
        if let Some(n) = budgets.iter().find(|n| **n > d) {
            return Err(Error::invalid(
                "n_c",
                format!("budget {n} exceeds dimension {d}"),
            ));
        }
        let uses_cge = budgets.iter().any(|n| *n > 0);
        let any_zero = budgets.contains(&0);
        match (&self.cge, uses_cge) {
            (Some(c), _) => {
                c.validate()?;
                check_dimension(d, c.dimension())?;
            }
            (None, true) => {
                return Err(Error::invalid(
                    "cge",
                    "a coordinate budget needs a CGE config",
                ))
            }
            (None, false) => {}
        }
        if self.rge.is_none() && !uses_cge {
            return Err(Error::invalid(
                "rge",
                "neither RGE nor a coordinate budget is configured",
            ));
        }
        if self.rge.is_none() && self.sampling == CoordinateSampling::Importance {
            return Err(Error::invalid(
                "sampling",
                "importance sampling needs an RGE probe",
            ));
        }
        if !(self.min_probability > 0.0 && self.min_probability <= 1.0) {
            return Err(Error::invalid("min_probability", "must lie in (0, 1]"));
        }
        self.alpha.validate()?;
        match self.alpha {
            AlphaPolicy::Constant(a) if self.rge.is_none() && a != 0.0 => {
                return Err(Error::invalid(
                    "alpha",
                    "without RGE the coefficient must be 0",
                ));
            }
            AlphaPolicy::Constant(a) if any_zero && a != 1.0 => {
                return Err(Error::invalid(
                    "alpha",
                    "a zero coordinate budget needs coefficient 1",
                ));
            }
            AlphaPolicy::LinearRamp if self.rge.is_none() || any_zero => {
                return Err(Error::invalid(
                    "alpha",
                    "the linear ramp needs both RGE and CGE every iteration",
                ));
            }
            _ => {}
        }
        match &self.step {
            StepSchedule::Constant(eta) if !(*eta >= 0.0) || !eta.is_finite() => {
                return Err(Error::invalid(
                    "step",
                    format!("constant step must be nonnegative, got {eta}"),
                ));
            }
            StepSchedule::ScDecay { a, sigma_bar } if !(*a > 1.0) || !(*sigma_bar > 0.0) => {
                return Err(Error::invalid(
                    "step",
                    "decaying schedule needs a > 1 and sigma_bar > 0",
                ));
            }
            _ => {}
        }
        if let OutputRule::WeightedAverage { a } = self.output {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::invalid("output", "weighted average needs a ≥ 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Iteration count after the update; the record describes `x_t`.
    pub t: usize,
    pub f_value: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    pub alpha: f64,
    pub eta: f64,
    pub realized_i_size: usize,
    pub actual_queries: u64,
    pub nominal_fqc: u64,
    /// P̄ of the probabilities used this step, when the CGE ran.
    pub p_bar: Option<f64>,
    pub uniform_fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<RunRecord>,
    pub output: Vec<f64>,
    /// Index `t` of the returned iterate, for the uniform-draw rule.
    pub output_index: Option<usize>,
    pub final_iterate: Vec<f64>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub totals: QueryCounter,
    /// Time average of P̄ over the iterations that ran the CGE.
    pub p_bar_average: Option<f64>,
    pub wall_time_s: f64,
}

impl RunTrace {
    pub fn min_grad_norm_sq(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.grad_norm_sq)
            .reduce(f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Update {
    Gradient,
    Sign,
}

/// Runs ZO-HGD from `x0`.
pub fn zo_hgd<O: Objective>(obj: &O, x0: &[f64], cfg: &HgdConfig) -> Result<RunTrace> {
    run(obj, x0, cfg, Update::Gradient)
}

/// Mini-batch ZO-SGD: the RGE alone.
pub fn zo_sgd<O: Objective>(obj: &O, x0: &[f64], cfg: &HgdConfig) -> Result<RunTrace> {
    let cfg = HgdConfig {
        coord_budget: CoordBudget::Fixed(0),
        alpha: AlphaPolicy::Constant(1.0),
        ..cfg.clone()
    };
    run(obj, x0, &cfg, Update::Gradient)
}

/// ZO-SCD: uniformly sampled coordinates, no RGE.
pub fn zo_scd<O: Objective>(obj: &O, x0: &[f64], cfg: &HgdConfig) -> Result<RunTrace> {
    let cfg = HgdConfig {
        rge: None,
        sampling: CoordinateSampling::Uniform,
        alpha: AlphaPolicy::Constant(0.0),
        ..cfg.clone()
    };
    run(obj, x0, &cfg, Update::Gradient)
}

/// ZO-signSGD: steps along the coordinate-wise sign of the RGE.
pub fn zo_signsgd<O: Objective>(obj: &O, x0: &[f64], cfg: &HgdConfig) -> Result<RunTrace> {
    if cfg.rge.is_none() {
        return Err(Error::invalid("rge", "signSGD needs an RGE config"));
    }
    let cfg = HgdConfig {
        coord_budget: CoordBudget::Fixed(0),
        alpha: AlphaPolicy::Constant(1.0),
        ..cfg.clone()
    };
    run(obj, x0, &cfg, Update::Sign)
}

fn constant_nonconvex_step<O: Objective>(obj: &O, cfg: &HgdConfig) -> Result<f64> {
    let l = obj
        .metadata()
        .lipschitz
        .ok_or(Error::MissingMetadata("lipschitz"))?;
    if !(l > 0.0) {
        return Err(Error::invalid(
            "lipschitz",
            "must be positive for the nonconvex bound step",
        ));
    }
    let d = obj.dimension() as f64;
    let budgets = cfg.coord_budget.entries(cfg.iterations);
    let min_nc = budgets.iter().filter(|n| **n > 0).min().copied();
    // Smallest probability any iteration can produce.
    let c = min_nc.map(|n| match cfg.sampling {
        CoordinateSampling::Uniform => (n as f64 / d).max(cfg.min_probability),
        CoordinateSampling::Importance => cfg.min_probability,
    });
    let eta = match (cfg.n_r(), c) {
        (0, Some(c)) => 3.0 * c / (24.0 * l),
        (n_r, None) => 1.0 / (24.0 * l * (1.0 + d / n_r as f64)),
        (n_r, Some(c)) => crate::importance::theoretical_step_size(l, c, 1.0 + d / n_r as f64)?,
    };
    Ok(eta)
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

struct Partial {
    records: Vec<RunRecord>,
    iterates: Option<Vec<Vec<f64>>>,
    x: Vec<f64>,
    counter: QueryCounter,
}

impl Partial {
    fn into_trace(self, started: Instant) -> RunTrace {
        RunTrace {
            records: self.records,
            output: self.x.clone(),
            output_index: None,
            final_iterate: self.x,
            iterates: self.iterates,
            totals: self.counter,
            p_bar_average: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        }
    }
}

fn run<O: Objective>(obj: &O, x0: &[f64], cfg: &HgdConfig, update: Update) -> Result<RunTrace> {
    let started = Instant::now();
    let d = obj.dimension();
    check_dimension(d, x0.len())?;
    cfg.validate(d)?;
    let big_t = cfg.iterations;
    let fixed_eta = match cfg.step {
        StepSchedule::NonconvexBound => Some(constant_nonconvex_step(obj, cfg)?),
        StepSchedule::Constant(eta) => Some(eta),
        StepSchedule::ScDecay { .. } => None,
    };

    let mut main = rng::stream(cfg.seed, rng::STREAM_MAIN);
    let output_index = match cfg.output {
        OutputRule::UniformRandomIterate => {
            Some(rng::stream(cfg.seed, rng::STREAM_OUTPUT).random_range(1..=big_t))
        }
        _ => None,
    };
    let exact = obj.exact();
    let mut counted = Counted::new(obj);
    let mut state = Partial {
        records: Vec::with_capacity(big_t),
        iterates: cfg.record_iterates.then(|| Vec::with_capacity(big_t)),
        x: x0.to_vec(),
        counter: QueryCounter::default(),
    };
    let mut chosen = None;
    let mut weighted = vec![0.0; d];
    let mut weight_sum = 0.0;
    let mut p_bar_sum = 0.0;
    let mut p_bar_count = 0usize;

    for t in 0..big_t {
        if let OutputRule::WeightedAverage { a } = cfg.output {
            let w = (a + t as f64).powi(2);
            for (acc, v) in weighted.iter_mut().zip(&state.x) {
                *acc += w * v;
            }
            weight_sum += w;
        }

        let n_c = cfg.coord_budget.at(t);
        let step = iteration(&mut counted, &state.x, cfg, t, n_c, update, &mut main);
        let step = match step {
            Ok(s) => s,
            Err(source) => {
                state.counter = counted.counter();
                return Err(Error::Aborted {
                    iteration: t,
                    source: Box::new(source),
                    partial: Box::new(state.into_trace(started)),
                });
            }
        };
        counted.counter_mut().add_nominal(
            cfg.n_r(),
            cfg.rge.as_ref().map_or(0, |r| r.batch),
            n_c,
            cfg.cge.as_ref().map_or(0, |c| c.batch),
        );

        let eta = match (&cfg.step, fixed_eta) {
            (_, Some(eta)) => eta,
            (StepSchedule::ScDecay { a, sigma_bar }, None) => 8.0 / (sigma_bar * (a + t as f64)),
            _ => unreachable!("every schedule resolves a step"),
        };
        for (xi, g) in state.x.iter_mut().zip(&step.direction) {
            *xi -= eta * g;
        }
        if let Some(pb) = step.p_bar {
            p_bar_sum += pb;
            p_bar_count += 1;
        }

        let counter = counted.counter();
        state.counter = counter;
        state.records.push(RunRecord {
            t: t + 1,
            f_value: exact.map(|o| o.value(&state.x)),
            grad_norm_sq: exact.map(|o| sq_norm(&o.gradient(&state.x))),
            alpha: step.alpha,
            eta,
            realized_i_size: step.realized,
            actual_queries: counter.actual_evaluations,
            nominal_fqc: counter.nominal_fqc,
            p_bar: step.p_bar,
            uniform_fallback: step.fallback,
        });
        if let Some(its) = state.iterates.as_mut() {
            its.push(state.x.clone());
        }
        if output_index == Some(t + 1) {
            chosen = Some(state.x.clone());
        }

        let norm = sq_norm(&state.x).sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                iteration: t + 1,
                norm,
                partial: Box::new(state.into_trace(started)),
            });
        }
    }

    let output = match cfg.output {
        OutputRule::UniformRandomIterate => chosen.expect("output index lies in 1..=T"),
        OutputRule::LastIterate => state.x.clone(),
        OutputRule::WeightedAverage { .. } => weighted.iter().map(|v| v / weight_sum).collect(),
    };
    Ok(RunTrace {
        records: state.records,
        output,
        output_index,
        final_iterate: state.x,
        iterates: state.iterates,
        totals: state.counter,
        p_bar_average: (p_bar_count > 0).then(|| p_bar_sum / p_bar_count as f64),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

struct Step {
    direction: Vec<f64>,
    alpha: f64,
    realized: usize,
    p_bar: Option<f64>,
    fallback: bool,
}

fn iteration<O: Objective, R: Rng>(
    counted: &mut Counted<'_, O>,
    x: &[f64],
    cfg: &HgdConfig,
    t: usize,
    n_c: usize,
    update: Update,
    rng: &mut R,
) -> Result<Step> {
    let d = x.len();
    let r_est = match &cfg.rge {
        Some(r) => Some(rge(counted, x, r, rng)?),
        None => None,
    };

    let mut probs: Option<ProbabilityVector> = None;
    let mut fallback = false;
    let mut realized = 0;
    let c_est = if n_c > 0 {
        let cge_cfg = cfg.cge.as_ref().expect("validated");
        let p = match (cfg.sampling, &r_est) {
            (CoordinateSampling::Importance, Some(r)) => {
                sparsification_probabilities(&r.vector, n_c)?
            }
            _ => ProbabilityVector::uniform(d, n_c)?,
        };
        fallback = p.uniform_fallback();
        let p = p.clipped(cfg.min_probability);
        let coords = sample_coordinate_set(&p, rng);
        realized = coords.len();
        let est = cge_sampled(counted, x, cge_cfg, &coords, &p, rng)?;
        probs = Some(p);
        Some(est)
    } else {
        None
    };

    let alpha = match cfg.alpha {
        AlphaPolicy::Constant(a) => a,
        AlphaPolicy::LinearRamp => t as f64 / cfg.iterations as f64,
        AlphaPolicy::Optimal => match &probs {
            None => 1.0,
            Some(p) => optimal_alpha(cfg.n_r(), p, d)?,
        },
    };

    let direction = match update {
        Update::Sign => r_est
            .expect("validated")
            .vector
            .iter()
            .map(|v| if *v == 0.0 { 0.0 } else { v.signum() })
            .collect(),
        Update::Gradient => {
            let zero = || GradientEstimate::zero(d, EstimatorKind::Rge);
            match (r_est, c_est) {
                (Some(r), Some(c)) => hge(&r, &c, alpha)?.vector,
                (Some(r), None) => hge(&r, &zero(), alpha)?.vector,
                (None, Some(c)) => hge(&zero(), &c, alpha)?.vector,
                (None, None) => unreachable!("validated"),
            }
        }
    };
    Ok(Step {
        direction,
        alpha,
        realized,
        p_bar: probs.map(|p| p.p_bar()),
        fallback,
    })
}
