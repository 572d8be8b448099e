//! Closed-form variance and second-moment bounds for the estimators, and the
//! Monte Carlo machinery that checks them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_dimension, Error, Result};
use crate::estimators::{cge_full, cge_sampled, hge, rge, CgeConfig, GradientEstimate, RgeConfig};
use crate::importance::{sample_coordinate_set, ProbabilityVector};
use crate::objectives::{Counted, ExactOracle, Objective};
use crate::rng;

/// Trials per parallel chunk. Chunk `k` draws from RNG stream `CHUNK_STREAM_BASE + k`.
const CHUNK: usize = 2048;
const CHUNK_STREAM_BASE: u64 = 16;

/// Everything the bounds depend on at one point `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub lipschitz: f64,
    pub zeta: f64,
    pub n_r: usize,
    pub batch_r: usize,
    pub batch_c: usize,
    pub mu_r: f64,
    pub mu_c: Vec<f64>,
    pub p: ProbabilityVector,
    /// ∇f(x) from the exact oracle.
    pub grad: Vec<f64>,
}

impl BoundInputs {
    /// Reads L, ζ and ∇f(x) from the objective. Refuses when any is unknown.
    pub fn from_objective<O: Objective>(
        obj: &O,
        x: &[f64],
        rge: &RgeConfig,
        cge: &CgeConfig,
        p: ProbabilityVector,
    ) -> Result<Self> {
        let d = obj.dimension();
        check_dimension(d, x.len())?;
        check_dimension(d, cge.dimension())?;
        check_dimension(d, p.len())?;
        let meta = obj.metadata();
        let lipschitz = meta.lipschitz.ok_or(Error::MissingMetadata("lipschitz"))?;
        let zeta = meta
            .coord_variance_zeta
            .ok_or(Error::MissingMetadata("coord_variance_zeta"))?;
        let oracle = obj
            .exact()
            .ok_or(Error::MissingMetadata("exact gradient oracle"))?;
        Ok(Self {
            lipschitz,
            zeta,
            n_r: rge.n_r,
            batch_r: rge.batch,
            batch_c: cge.batch,
            mu_r: rge.mu_r,
            mu_c: cge.mu_c.clone(),
            p,
            grad: oracle.gradient(x),
        })
    }

    pub fn d(&self) -> usize {
        self.grad.len()
    }

    /// σ² = d·ζ².
    pub fn sigma_sq(&self) -> f64 {
        self.d() as f64 * self.zeta * self.zeta
    }

    pub fn d_nr(&self) -> f64 {
        1.0 + self.d() as f64 / self.n_r as f64
    }

    pub fn p_bar(&self) -> f64 {
        self.p.p_bar()
    }

    fn grad_sq(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum()
    }

    fn rge_smoothing_factor(&self) -> f64 {
        let (b, n) = (self.batch_r as f64, self.n_r as f64);
        let d = self.d() as f64;
        (1.0 + 2.0 / b + 2.0 / (n * b)) * (self.mu_r * self.lipschitz * d).powi(2)
    }
}

/// E‖∇_r − ∇f‖² ≤ (2/|B_r|)·d_nr·(‖∇f‖² + σ²) + (1 + 2/|B_r| + 2/(n_r|B_r|))·μ_r²L²d²/4.
pub fn rge_variance_bound(inp: &BoundInputs) -> f64 {
    let b = inp.batch_r as f64;
    2.0 / b * inp.d_nr() * (inp.grad_sq() + inp.sigma_sq()) + inp.rge_smoothing_factor() / 4.0
}

/// E‖∇_c − ∇f‖² ≤ Σ_i (1/p_i)[2g_i² + (3/|B_c|)(ζ² + L²μ_i²/2) + L²μ_i²/2] − 2‖∇f‖².
pub fn cge_variance_bound(inp: &BoundInputs) -> f64 {
    let l2 = inp.lipschitz * inp.lipschitz;
    let b = inp.batch_c as f64;
    let zeta_sq = inp.zeta * inp.zeta;
    let sum: f64 = (0..inp.d())
        .map(|i| {
            let smooth = l2 * inp.mu_c[i] * inp.mu_c[i] / 2.0;
            let g = inp.grad[i];
            (2.0 * g * g + 3.0 / b * (zeta_sq + smooth) + smooth) / inp.p.as_slice()[i]
        })
        .sum();
    sum - 2.0 * inp.grad_sq()
}

/// 2α²·(RGE bound) + 2(1−α)²·(CGE bound).
pub fn hge_variance_bound(inp: &BoundInputs, alpha: f64) -> f64 {
    2.0 * alpha * alpha * rge_variance_bound(inp)
        + 2.0 * (1.0 - alpha).powi(2) * cge_variance_bound(inp)
}

/// Bounds on `(E‖∇_r‖², E‖∇_c‖²)`.
pub fn sqnorm_bounds(inp: &BoundInputs) -> (f64, f64) {
    let b_r = inp.batch_r as f64;
    let d_nr = inp.d_nr();
    let rge = (2.0 + 4.0 / b_r * d_nr) * inp.grad_sq()
        + 4.0 * inp.sigma_sq() / b_r * d_nr
        + inp.rge_smoothing_factor() / 2.0;
    let l2 = inp.lipschitz * inp.lipschitz;
    let b_c = inp.batch_c as f64;
    let zeta_sq = inp.zeta * inp.zeta;
    let cge = (0..inp.d())
        .map(|i| {
            let g = inp.grad[i];
            let smooth = l2 * inp.mu_c[i] * inp.mu_c[i] / 2.0 * (1.0 + 3.0 / b_c);
            (2.0 * g * g + 3.0 * zeta_sq / b_c + smooth) / inp.p.as_slice()[i]
        })
        .sum();
    (rge, cge)
}

/// Bounds on `(⟨−∇f, E∇_r⟩, ⟨−∇f, E∇_c⟩)`. The second uses `L²·Σμ_{c,i}²`,
/// which is `L²dμ_c²` for a common radius.
pub fn inner_product_bounds(inp: &BoundInputs) -> (f64, f64) {
    let base = -0.75 * inp.grad_sq();
    let d = inp.d() as f64;
    let rge = base + (inp.mu_r * d * inp.lipschitz).powi(2) / 4.0;
    let mu_sq: f64 = inp.mu_c.iter().map(|m| m * m).sum();
    let cge = base + inp.lipschitz * inp.lipschitz * mu_sq;
    (rge, cge)
}

/// Which estimator a Monte Carlo experiment draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    Rge(RgeConfig),
    CgeFull(CgeConfig),
    CgeSampled {
        cge: CgeConfig,
        p: ProbabilityVector,
    },
    Hge {
        rge: RgeConfig,
        cge: CgeConfig,
        p: ProbabilityVector,
        alpha: f64,
    },
}

fn draw<O: Objective, R: rand::Rng>(
    counted: &mut Counted<'_, O>,
    x: &[f64],
    spec: &EstimatorSpec,
    rng: &mut R,
) -> Result<GradientEstimate> {
    match spec {
        EstimatorSpec::Rge(cfg) => rge(counted, x, cfg, rng),
        EstimatorSpec::CgeFull(cfg) => cge_full(counted, x, cfg, rng),
        EstimatorSpec::CgeSampled { cge, p } => {
            let coords = sample_coordinate_set(p, rng);
            cge_sampled(counted, x, cge, &coords, p, rng)
        }
        EstimatorSpec::Hge {
            rge: r,
            cge,
            p,
            alpha,
        } => {
            let r_est = rge(counted, x, r, rng)?;
            let coords = sample_coordinate_set(p, rng);
            let c_est = cge_sampled(counted, x, cge, &coords, p, rng)?;
            hge(&r_est, &c_est, *alpha)
        }
    }
}

/// Sample means of an estimator and its derived scalars, with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub trials: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// E‖ĝ − ∇f‖².
    pub variance: f64,
    pub variance_se: f64,
    /// E‖ĝ‖².
    pub sqnorm: f64,
    pub sqnorm_se: f64,
    /// ⟨−∇f, E ĝ⟩.
    pub neg_inner: f64,
    pub neg_inner_se: f64,
}

/// Running sums for one chunk; merged in chunk order.
#[derive(Clone, Debug)]
struct Sums {
    n: usize,
    v: Vec<f64>,
    v2: Vec<f64>,
    scalars: [(f64, f64); 3],
}

impl Sums {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            v: vec![0.0; d],
            v2: vec![0.0; d],
            scalars: [(0.0, 0.0); 3],
        }
    }

    fn push(&mut self, g: &[f64], truth: &[f64]) {
        self.n += 1;
        let mut err = 0.0;
        let mut sq = 0.0;
        let mut inner = 0.0;
        for i in 0..g.len() {
            self.v[i] += g[i];
            self.v2[i] += g[i] * g[i];
            err += (g[i] - truth[i]).powi(2);
            sq += g[i] * g[i];
            inner -= truth[i] * g[i];
        }
        for (acc, v) in self.scalars.iter_mut().zip([err, sq, inner]) {
            acc.0 += v;
            acc.1 += v * v;
        }
    }

    fn merge(mut self, other: &Sums) -> Self {
        self.n += other.n;
        for i in 0..self.v.len() {
            self.v[i] += other.v[i];
            self.v2[i] += other.v2[i];
        }
        for (a, b) in self.scalars.iter_mut().zip(&other.scalars) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self
    }
}

/// Mean and standard error from a sum and sum of squares.
fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Runs `trials` independent draws of `spec` at `x`, in parallel chunks with
/// their own RNG streams. The result depends only on `seed`, not on thread count.
pub fn empirical_moments<O: Objective>(
    obj: &O,
    x: &[f64],
    spec: &EstimatorSpec,
    trials: usize,
    seed: u64,
) -> Result<Moments> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    let d = obj.dimension();
    check_dimension(d, x.len())?;
    let oracle = obj
        .exact()
        .ok_or(Error::MissingMetadata("exact gradient oracle"))?;
    let truth = oracle.gradient(x);
    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<Result<Sums>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, CHUNK_STREAM_BASE + k as u64);
            let mut counted = Counted::new(obj);
            let mut sums = Sums::new(d);
            let n = CHUNK.min(trials - k * CHUNK);
            for _ in 0..n {
                let est = draw(&mut counted, x, spec, &mut r)?;
                sums.push(&est.vector, &truth);
            }
            Ok(sums)
        })
        .collect();
    let mut total = Sums::new(d);
    for part in partials {
        total = total.merge(&part?);
    }
    let (mean, mean_se): (Vec<f64>, Vec<f64>) = (0..d)
        .map(|i| mean_and_se(total.v[i], total.v2[i], trials))
        .unzip();
    let [err, sq, inner] = total.scalars.map(|(s, s2)| mean_and_se(s, s2, trials));
    Ok(Moments {
        trials,
        mean,
        mean_se,
        variance: err.0,
        variance_se: err.1,
        sqnorm: sq.0,
        sqnorm_se: sq.1,
        neg_inner: inner.0,
        neg_inner_se: inner.1,
    })
}

/// Empirical E‖α·∇_r + (1−α)·∇_c − ∇f‖² for each α, with common random numbers.
/// Returns `(alpha, variance, standard error)` triples.
#[allow(clippy::too_many_arguments)]
pub fn hge_alpha_sweep<O: Objective>(
    obj: &O,
    x: &[f64],
    rge_cfg: &RgeConfig,
    cge_cfg: &CgeConfig,
    p: &ProbabilityVector,
    alphas: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    let oracle = obj
        .exact()
        .ok_or(Error::MissingMetadata("exact gradient oracle"))?;
    let truth = oracle.gradient(x);
    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<Result<Vec<(f64, f64)>>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, CHUNK_STREAM_BASE + k as u64);
            let mut counted = Counted::new(obj);
            let mut acc = vec![(0.0, 0.0); alphas.len()];
            for _ in 0..CHUNK.min(trials - k * CHUNK) {
                let re = rge(&mut counted, x, rge_cfg, &mut r)?;
                let coords = sample_coordinate_set(p, &mut r);
                let ce = cge_sampled(&mut counted, x, cge_cfg, &coords, p, &mut r)?;
                for (slot, &a) in acc.iter_mut().zip(alphas) {
                    let e: f64 = (0..truth.len())
                        .map(|i| (a * re.vector[i] + (1.0 - a) * ce.vector[i] - truth[i]).powi(2))
                        .sum();
                    slot.0 += e;
                    slot.1 += e * e;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![(0.0, 0.0); alphas.len()];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            t.0 += p.0;
            t.1 += p.1;
        }
    }
    Ok(alphas
        .iter()
        .zip(total)
        .map(|(&a, (s, s2))| {
            let (m, se) = mean_and_se(s, s2, trials);
            (a, m, se)
        })
        .collect())
}

/// One-sided normal tail beyond 3σ.
const THREE_SIGMA_TAIL: f64 = 0.001_349_898_031_630_095;

/// One bound compared against its Monte Carlo counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub bound: f64,
    pub empirical: f64,
    pub standard_error: f64,
    /// Allowed excess, in standard errors.
    pub sigmas: f64,
    pub pass: bool,
}

impl BoundCheck {
    /// Passes when `empirical ≤ bound + 3·SE`.
    pub fn new(name: impl Into<String>, bound: f64, empirical: f64, standard_error: f64) -> Self {
        Self::with_sigmas(name, bound, empirical, standard_error, 3.0)
    }

    pub fn with_sigmas(
        name: impl Into<String>,
        bound: f64,
        empirical: f64,
        standard_error: f64,
        sigmas: f64,
    ) -> Self {
        Self {
            name: name.into(),
            bound,
            empirical,
            standard_error,
            sigmas,
            pass: empirical <= bound + sigmas * standard_error,
        }
    }
}

/// Settings for [`check_bounds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSettings {
    pub rge: RgeConfig,
    pub cge: CgeConfig,
    pub n_c: usize,
    /// Combination coefficient for the hybrid check; α* when absent.
    pub alpha: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Replaces the objective's Lipschitz constant.
    pub lipschitz_override: Option<f64>,
    /// Random point pairs for the smoothness check.
    pub smoothness_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n_r: usize,
    pub n_c: usize,
    pub mu_r: f64,
    pub batch_r: usize,
    pub batch_c: usize,
    pub alpha: f64,
    pub lipschitz: f64,
    pub rge_var_bound: f64,
    pub cge_var_bound: f64,
    pub hge_var_bound: f64,
    pub rge_sqnorm_bound: f64,
    pub cge_sqnorm_bound: f64,
    pub checks: Vec<BoundCheck>,
    pub passed: bool,
}

impl BoundReport {
    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Largest `‖∇f(a) − ∇f(b)‖/‖a − b‖` over random pairs in a ball around `x`.
pub fn empirical_smoothness<S>(
    oracle: &dyn ExactOracle<S>,
    x: &[f64],
    pairs: usize,
    seed: u64,
) -> f64 {
    use rand::Rng;
    let mut r = rng::stream(seed, CHUNK_STREAM_BASE - 1);
    let radius = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a: Vec<f64> = x
            .iter()
            .map(|v| v + radius * r.random_range(-1.0..1.0))
            .collect();
        let b: Vec<f64> = x
            .iter()
            .map(|v| v + radius * r.random_range(-1.0..1.0))
            .collect();
        let (ga, gb) = (oracle.gradient(&a), oracle.gradient(&b));
        let num: f64 = ga
            .iter()
            .zip(&gb)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = a
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    worst
}

/// Checks every bound at `x` for one estimator configuration.
///
/// Selection probabilities come from the exact gradient at `x`. Besides the
/// estimator bounds the report checks the problem constants themselves: the
/// Lipschitz constant in use against observed gradient differences, and ζ²
/// against the per-coordinate variance of sampled gradients.
pub fn check_bounds<O: Objective>(
    obj: &O,
    x: &[f64],
    s: &DiagnosticSettings,
) -> Result<BoundReport> {
    let d = obj.dimension();
    let oracle = obj
        .exact()
        .ok_or(Error::MissingMetadata("exact gradient oracle"))?;
    let grad = oracle.gradient(x);
    let p = crate::importance::sparsification_probabilities(&grad, s.n_c)?;
    let mut inp = BoundInputs::from_objective(obj, x, &s.rge, &s.cge, p.clone())?;
    if let Some(l) = s.lipschitz_override {
        inp.lipschitz = l;
    }
    let alpha = match s.alpha {
        Some(a) => a,
        None => crate::importance::optimal_alpha(s.rge.n_r, &p, d)?,
    };

    let rge_m = empirical_moments(obj, x, &EstimatorSpec::Rge(s.rge.clone()), s.trials, s.seed)?;
    let sampled = EstimatorSpec::CgeSampled {
        cge: s.cge.clone(),
        p: p.clone(),
    };
    let cge_m = empirical_moments(obj, x, &sampled, s.trials, s.seed.wrapping_add(1))?;
    let hybrid = EstimatorSpec::Hge {
        rge: s.rge.clone(),
        cge: s.cge.clone(),
        p,
        alpha,
    };
    let hge_m = empirical_moments(obj, x, &hybrid, s.trials, s.seed.wrapping_add(2))?;

    let rge_var = rge_variance_bound(&inp);
    let cge_var = cge_variance_bound(&inp);
    let hge_var = hge_variance_bound(&inp, alpha);
    let (rge_sq, cge_sq) = sqnorm_bounds(&inp);
    let (rge_in, cge_in) = inner_product_bounds(&inp);

    let mut checks = vec![
        BoundCheck::new("rge_variance", rge_var, rge_m.variance, rge_m.variance_se),
        BoundCheck::new("cge_variance", cge_var, cge_m.variance, cge_m.variance_se),
        BoundCheck::new("hge_variance", hge_var, hge_m.variance, hge_m.variance_se),
        BoundCheck::new("rge_sqnorm", rge_sq, rge_m.sqnorm, rge_m.sqnorm_se),
        BoundCheck::new("cge_sqnorm", cge_sq, cge_m.sqnorm, cge_m.sqnorm_se),
        BoundCheck::new("rge_inner", rge_in, rge_m.neg_inner, rge_m.neg_inner_se),
        BoundCheck::new("cge_inner", cge_in, cge_m.neg_inner, cge_m.neg_inner_se),
    ];
    if s.smoothness_pairs > 0 {
        let observed = empirical_smoothness(oracle, x, s.smoothness_pairs, s.seed);
        // exact comparison up to rounding in the ratio
        checks.push(BoundCheck::new(
            "smoothness",
            inp.lipschitz * (1.0 + 1e-9),
            observed,
            0.0,
        ));
    }
    if let Some(noise) = coordinate_noise(obj, oracle, x, s.trials.min(20_000), s.seed)? {
        // the worst of d estimates: spread the 3σ one-sided level over them
        let sigmas = Normal::standard()
            .inverse_cdf(1.0 - THREE_SIGMA_TAIL / d as f64)
            .max(3.0);
        checks.push(BoundCheck::with_sigmas(
            "coordinate_noise",
            inp.zeta * inp.zeta,
            noise.0,
            noise.1,
            sigmas,
        ));
    }
    let passed = checks.iter().all(|c| c.pass);
    Ok(BoundReport {
        n_r: s.rge.n_r,
        n_c: s.n_c,
        mu_r: s.rge.mu_r,
        batch_r: s.rge.batch,
        batch_c: s.cge.batch,
        alpha,
        lipschitz: inp.lipschitz,
        rge_var_bound: rge_var,
        cge_var_bound: cge_var,
        hge_var_bound: hge_var,
        rge_sqnorm_bound: rge_sq,
        cge_sqnorm_bound: cge_sq,
        checks,
        passed,
    })
}

/// Largest per-coordinate variance of `∇F(x; ξ)` with its standard error,
/// when the objective exposes per-sample gradients.
fn coordinate_noise<O: Objective>(
    obj: &O,
    oracle: &dyn ExactOracle<O::Sample>,
    x: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Option<(f64, f64)>> {
    let mut r = rng::stream(seed, CHUNK_STREAM_BASE - 2);
    let truth = oracle.gradient(x);
    let d = truth.len();
    let mut s = vec![(0.0, 0.0); d];
    for _ in 0..trials.max(2) {
        let xi = obj.sample(&mut r);
        let Some(g) = oracle.sample_gradient(x, &xi) else {
            return Ok(None);
        };
        for i in 0..d {
            let e = (g[i] - truth[i]).powi(2);
            s[i].0 += e;
            s[i].1 += e * e;
        }
    }
    let n = trials.max(2);
    Ok(s.into_iter()
        .map(|(a, b)| mean_and_se(a, b, n))
        .max_by(|a, b| a.0.total_cmp(&b.0)))
}
