#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use zoh_core::{Objective, ObjectiveMetadata, Result};

/// `F(x; ξ) = Σ c_i x_i³ + ξ·x` with `ξ ~ N(0, ζ² I)`.
///
/// Over the unit ball `E v_i² = 1/(d+2)`, so the ball-smoothed gradient is
/// `3 c_i (x_i² + μ²/(d+2))`.
pub struct Cubic {
    pub c: Vec<f64>,
    pub zeta: f64,
    pub meta: ObjectiveMetadata,
}

impl Cubic {
    pub fn new(c: Vec<f64>, zeta: f64) -> Self {
        Self {
            c,
            zeta,
            meta: ObjectiveMetadata::default(),
        }
    }

    pub fn smoothed_gradient(&self, x: &[f64], mu: f64) -> Vec<f64> {
        let d = x.len() as f64;
        self.c
            .iter()
            .zip(x)
            .map(|(c, xi)| 3.0 * c * (xi * xi + mu * mu / (d + 2.0)))
            .collect()
    }

    /// Central differences along axes are exact up to the cubic term: `3c(x² + μ²/3)`.
    pub fn central_difference_gradient(&self, x: &[f64], mu: f64) -> Vec<f64> {
        self.c
            .iter()
            .zip(x)
            .map(|(c, xi)| 3.0 * c * (xi * xi) + c * mu * mu)
            .collect()
    }
}

impl Objective for Cubic {
    type Sample = Vec<f64>;

    fn dimension(&self) -> usize {
        self.c.len()
    }

    fn metadata(&self) -> &ObjectiveMetadata {
        &self.meta
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.c.len())
            .map(|_| self.zeta * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn evaluate(&self, x: &[f64], xi: &Vec<f64>) -> Result<f64> {
        Ok(self
            .c
            .iter()
            .zip(x)
            .zip(xi)
            .map(|((c, v), n)| c * v * v * v + n * v)
            .sum())
    }
}

/// Running per-coordinate mean and standard error.
pub struct Tally {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Tally {
    pub fn new(d: usize) -> Self {
        Self {
            n: 0,
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
        }
    }

    pub fn push(&mut self, v: &[f64]) {
        self.n += 1;
        for (i, x) in v.iter().enumerate() {
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    pub fn se(&self, i: usize) -> f64 {
        let n = self.n as f64;
        let m = self.mean(i);
        ((self.sum_sq[i] / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    }

    /// Panics unless every coordinate mean lies within `k` standard errors of `target`.
    pub fn assert_mean(&self, target: &[f64], k: f64, what: &str) {
        for (i, t) in target.iter().enumerate() {
            let (m, se) = (self.mean(i), self.se(i));
            assert!(
                (m - t).abs() <= k * se + 1e-12,
                "{what}[{i}]: mean {m} vs {t} (se {se})"
            );
        }
    }
}
