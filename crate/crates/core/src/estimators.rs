//! Finite-difference gradient estimators.
//!
//! Every estimator evaluates the objective through a [`Counted`] wrapper and
//! reports the exact number of evaluations it used.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dimension, Error, Result};
use crate::importance::ProbabilityVector;
use crate::objectives::{Counted, Objective};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgeConfig {
    /// Random directions per sample.
    pub n_r: usize,
    pub mu_r: f64,
    /// Mini-batch size |B_r|.
    pub batch: usize,
}

impl RgeConfig {
    pub fn new(n_r: usize, mu_r: f64, batch: usize) -> Result<Self> {
        let cfg = Self { n_r, mu_r, batch };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r == 0 {
            return Err(Error::invalid("n_r", "need at least one direction"));
        }
        if !(self.mu_r > 0.0) || !self.mu_r.is_finite() {
            return Err(Error::invalid(
                "mu_r",
                format!("must be positive, got {}", self.mu_r),
            ));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch_r", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgeConfig {
    /// Per-coordinate smoothing radii μ_{c,i}.
    pub mu_c: Vec<f64>,
    /// Mini-batch size |B_c|.
    pub batch: usize,
}

impl CgeConfig {
    pub fn new(mu_c: Vec<f64>, batch: usize) -> Result<Self> {
        let cfg = Self { mu_c, batch };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same radius on every coordinate.
    pub fn uniform(d: usize, mu_c: f64, batch: usize) -> Result<Self> {
        Self::new(vec![mu_c; d], batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_c.is_empty() {
            return Err(Error::invalid("mu_c", "empty radius vector"));
        }
        if let Some(bad) = self.mu_c.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(Error::invalid(
                "mu_c",
                format!("radii must be positive, got {bad}"),
            ));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch_c", "must be positive"));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.mu_c.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Rge,
    CgeFull,
    CgeSampled,
    Hge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub kind: EstimatorKind,
    pub queries_used: u64,
    pub alpha_used: Option<f64>,
}

impl GradientEstimate {
    fn new(vector: Vec<f64>, kind: EstimatorKind, queries_used: u64) -> Self {
        Self {
            vector,
            kind,
            queries_used,
            alpha_used: None,
        }
    }

    /// A zero estimate that cost nothing.
    pub fn zero(d: usize, kind: EstimatorKind) -> Self {
        Self::new(vec![0.0; d], kind, 0)
    }
}

/// Uniform direction on the unit sphere in `R^d` (normalized Gaussian).
pub fn sample_unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("d", "sphere dimension must be positive"));
    }
    loop {
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        // a zero Gaussian vector has probability zero but would divide by 0
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
            return Ok(u);
        }
    }
}

/// Forward-difference random-direction estimate, batch-averaged.
///
/// For each sample ξ the base value `F(x; ξ)` is evaluated once and shared by
/// the `n_r` directions, so this costs `|B_r|·(n_r + 1)` evaluations.
pub fn rge<O, R>(
    obj: &mut Counted<'_, O>,
    x: &[f64],
    cfg: &RgeConfig,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let d = obj.dimension();
    check_dimension(d, x.len())?;
    let start = obj.queries();
    let mut sum = vec![0.0; d];
    let mut probe = x.to_vec();
    let scale = d as f64 / (cfg.mu_r * (cfg.n_r * cfg.batch) as f64);
    for _ in 0..cfg.batch {
        let xi = obj.sample(rng);
        let base = obj.evaluate(x, &xi)?;
        for _ in 0..cfg.n_r {
            let u = sample_unit_sphere(d, rng)?;
            for ((p, xv), uv) in probe.iter_mut().zip(x).zip(&u) {
                *p = xv + cfg.mu_r * uv;
            }
            let diff = obj.evaluate(&probe, &xi)? - base;
            for (s, uv) in sum.iter_mut().zip(&u) {
                *s += diff * uv;
            }
        }
    }
    sum.iter_mut().for_each(|s| *s *= scale);
    Ok(GradientEstimate::new(
        sum,
        EstimatorKind::Rge,
        obj.queries() - start,
    ))
}

/// Central difference along coordinate `i` for one sample. Two evaluations.
pub fn cge_component<O>(
    obj: &mut Counted<'_, O>,
    x: &[f64],
    i: usize,
    mu: f64,
    sample: &O::Sample,
) -> Result<f64>
where
    O: Objective + ?Sized,
{
    let d = obj.dimension();
    check_dimension(d, x.len())?;
    if i >= d {
        return Err(Error::IndexOutOfRange {
            index: i,
            dimension: d,
        });
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::invalid(
            "mu_c",
            format!("must be positive, got {mu}"),
        ));
    }
    let mut probe = x.to_vec();
    probe[i] = x[i] + mu;
    let up = obj.evaluate(&probe, sample)?;
    probe[i] = x[i] - mu;
    let down = obj.evaluate(&probe, sample)?;
    Ok((up - down) / (2.0 * mu))
}

/// Full coordinate-wise estimate: `2·d·|B_c|` evaluations.
pub fn cge_full<O, R>(
    obj: &mut Counted<'_, O>,
    x: &[f64],
    cfg: &CgeConfig,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    let d = obj.dimension();
    let coords: Vec<usize> = (0..d).collect();
    let mut est = coordinate_sum(obj, x, cfg, &coords, None, rng)?;
    est.kind = EstimatorKind::CgeFull;
    Ok(est)
}

/// Importance-weighted estimate over the coordinate set `coords`:
/// entry `i ∈ coords` is the batch-averaged central difference divided by `p_i`.
pub fn cge_sampled<O, R>(
    obj: &mut Counted<'_, O>,
    x: &[f64],
    cfg: &CgeConfig,
    coords: &[usize],
    p: &ProbabilityVector,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    check_dimension(obj.dimension(), p.len())?;
    coordinate_sum(obj, x, cfg, coords, Some(p.as_slice()), rng)
}

fn coordinate_sum<O, R>(
    obj: &mut Counted<'_, O>,
    x: &[f64],
    cfg: &CgeConfig,
    coords: &[usize],
    p: Option<&[f64]>,
    rng: &mut R,
) -> Result<GradientEstimate>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let d = obj.dimension();
    check_dimension(d, x.len())?;
    check_dimension(d, cfg.dimension())?;
    for &i in coords {
        if i >= d {
            return Err(Error::IndexOutOfRange {
                index: i,
                dimension: d,
            });
        }
        if let Some(p) = p {
            if !(p[i] > 0.0) {
                return Err(Error::ZeroProbability { index: i });
            }
        }
    }
    let start = obj.queries();
    let mut out = vec![0.0; d];
    if coords.is_empty() {
        return Ok(GradientEstimate::new(out, EstimatorKind::CgeSampled, 0));
    }
    for _ in 0..cfg.batch {
        let xi = obj.sample(rng);
        for &i in coords {
            out[i] += cge_component(obj, x, i, cfg.mu_c[i], &xi)?;
        }
    }
    let b = cfg.batch as f64;
    for &i in coords {
        let w = p.map_or(1.0, |p| p[i]);
        out[i] /= b * w;
    }
    Ok(GradientEstimate::new(
        out,
        EstimatorKind::CgeSampled,
        obj.queries() - start,
    ))
}

/// `α·rge + (1−α)·cge`.
pub fn hge(
    rge_est: &GradientEstimate,
    cge_est: &GradientEstimate,
    alpha: f64,
) -> Result<GradientEstimate> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(
            "alpha",
            format!("must lie in [0, 1], got {alpha}"),
        ));
    }
    check_dimension(rge_est.vector.len(), cge_est.vector.len())?;
    let vector = rge_est
        .vector
        .iter()
        .zip(&cge_est.vector)
        .map(|(r, c)| alpha * r + (1.0 - alpha) * c)
        .collect();
    Ok(GradientEstimate {
        vector,
        kind: EstimatorKind::Hge,
        queries_used: rge_est.queries_used + cge_est.queries_used,
        alpha_used: Some(alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::objectives::{ObjectiveMetadata, Quadratic};
    use crate::rng;

    /// Noiseless closure objective for hand-checkable cases.
    struct Func<F> {
        d: usize,
        f: F,
        meta: ObjectiveMetadata,
    }

    impl<F: Fn(&[f64]) -> f64 + Sync> Func<F> {
        fn new(d: usize, f: F) -> Self {
            Self {
                d,
                f,
                meta: ObjectiveMetadata::default(),
            }
        }
    }

    impl<F: Fn(&[f64]) -> f64 + Sync> Objective for Func<F> {
        type Sample = ();
        fn dimension(&self) -> usize {
            self.d
        }
        fn metadata(&self) -> &ObjectiveMetadata {
            &self.meta
        }
        fn sample<R: Rng + ?Sized>(&self, _rng: &mut R) {}
        fn evaluate(&self, x: &[f64], _: &()) -> Result<f64> {
            check_dimension(self.d, x.len())?;
            Ok((self.f)(x))
        }
    }

    #[test]
    fn sphere_in_one_dimension_is_a_sign() {
        let mut r = rng::seeded(1);
        for _ in 0..50 {
            let u = sample_unit_sphere(1, &mut r).unwrap();
            assert!(u[0] == 1.0 || u[0] == -1.0);
        }
        assert!(sample_unit_sphere(0, &mut r).is_err());
    }

    #[test]
    fn sphere_draws_are_unit_norm() {
        let mut r = rng::seeded(2);
        for d in [1, 2, 5, 50, 1000] {
            let u = sample_unit_sphere(d, &mut r).unwrap();
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rge_is_exact_on_linear_functions() {
        let c = [0.5, -1.0, 2.0];
        let f = Func::new(3, |x: &[f64]| x.iter().zip(&c).map(|(a, b)| a * b).sum());
        let mut counted = Counted::new(&f);
        let cfg = RgeConfig::new(1, 0.37, 1).unwrap();
        let mut r = rng::seeded(11);
        let est = rge(&mut counted, &[1.0, 1.0, 1.0], &cfg, &mut r).unwrap();
        // replay the direction draw
        let mut r = rng::seeded(11);
        let u = sample_unit_sphere(3, &mut r).unwrap();
        let cu: f64 = c.iter().zip(&u).map(|(a, b)| a * b).sum();
        for (e, uv) in est.vector.iter().zip(&u) {
            assert!((e - 3.0 * cu * uv).abs() < 1e-12);
        }
        assert_eq!(est.queries_used, 2);
    }

    #[test]
    fn constant_function_gives_zero_estimates() {
        let f = Func::new(4, |_: &[f64]| 3.5);
        let mut counted = Counted::new(&f);
        let mut r = rng::seeded(5);
        let x = [0.1, 0.2, 0.3, 0.4];
        let re = rge(
            &mut counted,
            &x,
            &RgeConfig::new(3, 0.1, 2).unwrap(),
            &mut r,
        )
        .unwrap();
        assert!(re.vector.iter().all(|v| *v == 0.0));
        let ce = cge_full(
            &mut counted,
            &x,
            &CgeConfig::uniform(4, 0.1, 2).unwrap(),
            &mut r,
        )
        .unwrap();
        assert!(ce.vector.iter().all(|v| *v == 0.0));
        assert_eq!(cge_component(&mut counted, &x, 2, 0.5, &()).unwrap(), 0.0);
    }

    #[test]
    fn rge_query_count_shares_base_evaluation() {
        let q = Quadratic::new(vec![1.0; 5], 0.2).unwrap();
        let mut counted = Counted::new(&q);
        let mut r = rng::seeded(9);
        let est = rge(
            &mut counted,
            &[0.0; 5],
            &RgeConfig::new(4, 0.01, 3).unwrap(),
            &mut r,
        )
        .unwrap();
        assert_eq!(est.queries_used, 3 * (4 + 1));
        assert_eq!(counted.queries(), est.queries_used);
    }

    #[test]
    fn central_difference_is_exact_on_quadratics() {
        let q = Quadratic::new(vec![1.0, 2.5, 0.3], 0.0).unwrap();
        let mut counted = Counted::new(&q);
        let x = [0.7, -1.2, 3.0];
        for mu in [1e-3, 0.5, 4.0] {
            for i in 0..3 {
                let c = cge_component(&mut counted, &x, i, mu, &vec![]).unwrap();
                let exact = 2.0 * q.diag()[i] * x[i];
                assert!((c - exact).abs() <= 1e-9 * exact.abs().max(1.0));
            }
        }
        assert_eq!(counted.queries(), 18);
    }

    #[test]
    fn cubic_central_difference_by_hand() {
        let f = Func::new(1, |x: &[f64]| x[0].powi(3));
        let mut counted = Counted::new(&f);
        let c = cge_component(&mut counted, &[1.0], 0, 0.1, &()).unwrap();
        assert!((c - 3.01).abs() < 1e-12);
        assert!(matches!(
            cge_component(&mut counted, &[1.0], 1, 0.1, &()),
            Err(Error::IndexOutOfRange {
                index: 1,
                dimension: 1
            })
        ));
    }

    #[test]
    fn bilinear_full_cge_by_hand() {
        let f = Func::new(2, |x: &[f64]| x[0] * x[1]);
        let mut counted = Counted::new(&f);
        let mut r = rng::seeded(0);
        let cfg = CgeConfig::uniform(2, 0.5, 3).unwrap();
        let est = cge_full(&mut counted, &[1.0, 2.0], &cfg, &mut r).unwrap();
        assert_eq!(est.vector, vec![2.0, 1.0]);
        assert_eq!(est.queries_used, 2 * 2 * 3);
        assert_eq!(est.kind, EstimatorKind::CgeFull);
    }

    #[test]
    fn sampled_cge_special_cases() {
        let q = Quadratic::new(vec![1.0, 2.0, 3.0], 0.0).unwrap();
        let cfg = CgeConfig::uniform(3, 0.1, 1).unwrap();
        let x = [1.0, 1.0, 1.0];
        let mut counted = Counted::new(&q);
        let ones = ProbabilityVector::from_probabilities(vec![1.0; 3]).unwrap();
        let full = cge_full(&mut counted, &x, &cfg, &mut rng::seeded(4)).unwrap();
        let all = cge_sampled(
            &mut counted,
            &x,
            &cfg,
            &[0, 1, 2],
            &ones,
            &mut rng::seeded(4),
        )
        .unwrap();
        assert_eq!(full.vector, all.vector);
        let none = cge_sampled(&mut counted, &x, &cfg, &[], &ones, &mut rng::seeded(4)).unwrap();
        assert_eq!(none.vector, vec![0.0; 3]);
        assert_eq!(none.queries_used, 0);
        let half = ProbabilityVector::from_probabilities(vec![1.0, 0.5, 0.5]).unwrap();
        let some = cge_sampled(&mut counted, &x, &cfg, &[2], &half, &mut rng::seeded(4)).unwrap();
        assert_eq!(some.vector[0], 0.0);
        assert!((some.vector[2] - 6.0 / 0.5).abs() < 1e-9);
    }

    #[test]
    fn config_validation_rejects_degenerate_radii() {
        assert!(RgeConfig::new(1, 0.0, 1).is_err());
        assert!(RgeConfig::new(0, 0.1, 1).is_err());
        assert!(RgeConfig::new(1, 0.1, 0).is_err());
        assert!(CgeConfig::new(vec![0.1, -0.1], 1).is_err());
        assert!(CgeConfig::uniform(3, f64::NAN, 1).is_err());
        assert!(CgeConfig::uniform(3, 0.1, 0).is_err());
    }

    #[test]
    fn hybrid_combination() {
        let a = GradientEstimate::new(vec![2.0, 0.0], EstimatorKind::Rge, 3);
        let b = GradientEstimate::new(vec![0.0, 2.0], EstimatorKind::CgeSampled, 4);
        assert_eq!(hge(&a, &b, 1.0).unwrap().vector, a.vector);
        assert_eq!(hge(&a, &b, 0.0).unwrap().vector, b.vector);
        let mid = hge(&a, &b, 0.5).unwrap();
        assert_eq!(mid.vector, vec![1.0, 1.0]);
        assert_eq!(mid.queries_used, 7);
        assert_eq!(mid.alpha_used, Some(0.5));
        assert!(hge(&a, &b, 1.5).is_err());
        let short = GradientEstimate::new(vec![1.0], EstimatorKind::Rge, 0);
        assert!(hge(&short, &b, 0.5).is_err());
    }

    #[test]
    fn estimates_are_deterministic_per_seed() {
        let q = Quadratic::new(vec![1.0, 2.0, 0.5, 4.0], 0.3).unwrap();
        let cfg = RgeConfig::new(3, 0.05, 2).unwrap();
        let x = [0.3, -0.1, 0.8, 1.0];
        let run = |seed| {
            let mut counted = Counted::new(&q);
            rge(&mut counted, &x, &cfg, &mut rng::seeded(seed))
                .unwrap()
                .vector
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }
}
