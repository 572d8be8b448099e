//! Coordinate-selection probabilities and the quantities derived from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability assigned to coordinates whose probe gradient is exactly zero.
pub const PROBABILITY_FLOOR: f64 = 1e-6;

/// Bernoulli inclusion probabilities for the coordinate-wise estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector {
    p: Vec<f64>,
    budget: usize,
    k_star: usize,
    uniform_fallback: bool,
}

impl ProbabilityVector {
    /// `p_i = n_c/d` everywhere.
    pub fn uniform(d: usize, n_c: usize) -> Result<Self> {
        check_budget(d, n_c)?;
        let k_star = if n_c == d { d } else { 0 };
        Ok(Self {
            p: vec![n_c as f64 / d as f64; d],
            budget: n_c,
            k_star,
            uniform_fallback: false,
        })
    }

    /// Wraps arbitrary probabilities in `(0, 1]`. The budget is `Σp_i` rounded.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("p", "empty probability vector"));
        }
        if let Some(i) = p.iter().position(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::invalid(
                "p",
                format!("p[{i}] = {} is outside (0, 1]", p[i]),
            ));
        }
        let k_star = p.iter().filter(|v| **v == 1.0).count();
        let budget = p.iter().sum::<f64>().round() as usize;
        Ok(Self {
            p,
            budget,
            k_star,
            uniform_fallback: false,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// Number of coordinates selected with certainty.
    pub fn k_star(&self) -> usize {
        self.k_star
    }

    /// Set when the probe gradient was all zero and `n_c/d` was used instead.
    pub fn uniform_fallback(&self) -> bool {
        self.uniform_fallback
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }

    /// P̄ = (1/d)·Σ 1/p_i.
    pub fn p_bar(&self) -> f64 {
        self.p.iter().map(|v| 1.0 / v).sum::<f64>() / self.p.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.p.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Raises every entry to at least `floor`.
    pub fn clipped(mut self, floor: f64) -> Self {
        for v in &mut self.p {
            *v = v.max(floor);
        }
        self
    }
}

fn check_budget(d: usize, n_c: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("d", "dimension must be positive"));
    }
    if n_c == 0 || n_c > d {
        return Err(Error::invalid(
            "n_c",
            format!("budget {n_c} must lie in 1..={d}"),
        ));
    }
    Ok(())
}

/// Minimizes `Σ g_i²/p_i` subject to `Σ p_i ≤ n_c`, `0 < p_i ≤ 1`.
///
/// The `k` largest magnitudes get `p = 1`; the rest are proportional to `|g_i|`.
/// Zero entries are floored at [`PROBABILITY_FLOOR`]. If every entry outside
/// the top set is zero the leftover budget is spread evenly over them.
pub fn sparsification_probabilities(g: &[f64], n_c: usize) -> Result<ProbabilityVector> {
    let d = g.len();
    check_budget(d, n_c)?;
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid("g", format!("entry {i} is not finite")));
    }
    if g.iter().all(|v| *v == 0.0) {
        let mut pv = ProbabilityVector::uniform(d, n_c)?;
        pv.uniform_fallback = true;
        return Ok(pv);
    }
    if n_c == d {
        return Ok(ProbabilityVector {
            p: vec![1.0; d],
            budget: n_c,
            k_star: d,
            uniform_fallback: false,
        });
    }

    let mags: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    // stable, so equal magnitudes stay in index order
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    let mut tail = vec![0.0; d + 1];
    for j in (0..d).rev() {
        tail[j] = tail[j + 1] + mags[order[j]];
    }

    let k = (0..n_c)
        .find(|&k| mags[order[k]] * (n_c - k) as f64 <= tail[k])
        .unwrap_or(n_c);

    let mut p = vec![0.0; d];
    for &i in &order[..k] {
        p[i] = 1.0;
    }
    let rest = &order[k..];
    let remaining = (n_c - k) as f64;
    if tail[k] > 0.0 {
        for &i in rest {
            p[i] = (mags[i] * remaining / tail[k]).min(1.0);
            if p[i] == 0.0 {
                p[i] = PROBABILITY_FLOOR;
            }
        }
    } else {
        let share = remaining / rest.len() as f64;
        for &i in rest {
            p[i] = share;
        }
    }
    Ok(ProbabilityVector {
        p,
        budget: n_c,
        k_star: k,
        uniform_fallback: false,
    })
}

/// Includes coordinate `i` independently with probability `p_i`.
///
/// One uniform draw is consumed per coordinate, so the RNG advances by `d`
/// draws regardless of the outcome.
pub fn sample_coordinate_set<R: Rng + ?Sized>(p: &ProbabilityVector, rng: &mut R) -> Vec<usize> {
    p.p.iter()
        .enumerate()
        .filter_map(|(i, &pi)| (rng.random::<f64>() < pi).then_some(i))
        .collect()
}

/// Unbiased random sparsification: `Q(g)_i = Z_i·g_i/p_i`, `Z_i ~ Bernoulli(p_i)`.
pub fn sparsify<R: Rng + ?Sized>(
    g: &[f64],
    p: &ProbabilityVector,
    rng: &mut R,
) -> Result<Vec<f64>> {
    crate::error::check_dimension(p.len(), g.len())?;
    let mut out = vec![0.0; g.len()];
    for i in sample_coordinate_set(p, rng) {
        out[i] = g[i] / p.p[i];
    }
    Ok(out)
}

/// α* = [1 + (1 + d/n_r)/P̄]⁻¹, and 0 when there are no random directions.
pub fn optimal_alpha(n_r: usize, p: &ProbabilityVector, d: usize) -> Result<f64> {
    if let Some(i) = p.p.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroProbability { index: i });
    }
    optimal_alpha_from_p_bar(n_r, d, p.p_bar())
}

pub fn optimal_alpha_from_p_bar(n_r: usize, d: usize, p_bar: f64) -> Result<f64> {
    if n_r == 0 {
        return Ok(0.0);
    }
    if !(p_bar >= 1.0) || !p_bar.is_finite() {
        return Err(Error::invalid(
            "p_bar",
            format!("must be a finite value ≥ 1, got {p_bar}"),
        ));
    }
    let d_nr = 1.0 + d as f64 / n_r as f64;
    Ok(1.0 / (1.0 + d_nr / p_bar))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPolicy {
    /// α* recomputed each iteration from the current probabilities.
    Optimal,
    Constant(f64),
    /// α_t = t/T for t = 0..T−1.
    LinearRamp,
}

impl AlphaPolicy {
    pub fn validate(&self) -> Result<()> {
        if let AlphaPolicy::Constant(a) = self {
            if !(0.0..=1.0).contains(a) {
                return Err(Error::invalid(
                    "alpha",
                    format!("constant must lie in [0, 1], got {a}"),
                ));
            }
        }
        Ok(())
    }
}

/// η = (1/(24L))·min{3c, 1/d_nr}.
pub fn theoretical_step_size(lipschitz: f64, c_min: f64, d_nr: f64) -> Result<f64> {
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::invalid(
            "L",
            format!("must be positive, got {lipschitz}"),
        ));
    }
    if !(c_min > 0.0 && c_min <= 1.0) {
        return Err(Error::invalid(
            "c_min",
            format!("must lie in (0, 1], got {c_min}"),
        ));
    }
    if !(d_nr >= 1.0) {
        return Err(Error::invalid(
            "d_nr",
            format!("must be at least 1, got {d_nr}"),
        ));
    }
    Ok((3.0 * c_min).min(1.0 / d_nr) / (24.0 * lipschitz))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingRegime {
    Nonconvex,
    Convex,
    StronglyConvex,
}

/// Inputs to [`theoretical_smoothing`]. Fields a regime does not use may be `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub d: usize,
    pub n_r: usize,
    pub iterations: usize,
    pub lipschitz: Option<f64>,
    /// Average inverse probability (nonconvex).
    pub p_bar: Option<f64>,
    /// Probability lower bound c̄ (convex and strongly convex).
    pub c_bar: Option<f64>,
    pub strong_convexity: Option<f64>,
}

/// Returns `(mu_c, mu_r)` with unit constants in the rate-optimal scalings.
///
/// Nonconvex and convex couple `μ_c = μ_r·√d/2`; strongly convex uses
/// `μ_r = μ_c·√(dL/σ̄)`.
pub fn theoretical_smoothing(
    regime: SmoothingRegime,
    params: &SmoothingParams,
) -> Result<(f64, f64)> {
    let SmoothingParams {
        d, n_r, iterations, ..
    } = *params;
    if d == 0 || n_r == 0 || iterations == 0 {
        return Err(Error::invalid("smoothing", "d, n_r and T must be positive"));
    }
    let (d, t) = (d as f64, iterations as f64);
    let d_nr = 1.0 + d / n_r as f64;
    let positive = |v: Option<f64>, name: &'static str| -> Result<f64> {
        let v = v.ok_or(Error::MissingMetadata(name))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
        Ok(v)
    };
    let convex_mu_c = || -> Result<f64> {
        let c_bar = positive(params.c_bar, "c_bar")?;
        Ok((d_nr / (d * t * (1.0 + c_bar * d_nr))).sqrt())
    };
    match regime {
        SmoothingRegime::Nonconvex => {
            let p_bar = positive(params.p_bar, "p_bar")?;
            let mu_c = (d_nr / (d * d * t)).powf(0.25) * (1.0 + d_nr / p_bar).powf(-0.25);
            Ok((mu_c, 2.0 * mu_c / d.sqrt()))
        }
        SmoothingRegime::Convex => {
            let mu_c = convex_mu_c()?;
            Ok((mu_c, 2.0 * mu_c / d.sqrt()))
        }
        SmoothingRegime::StronglyConvex => {
            let l = positive(params.lipschitz, "lipschitz")?;
            let s = positive(params.strong_convexity, "strong_convexity")?;
            let mu_c = convex_mu_c()?;
            Ok((mu_c, mu_c * (d * l / s).sqrt()))
        }
    }
}
