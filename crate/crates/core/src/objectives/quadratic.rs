use rand::Rng;

use super::{ExactOracle, Objective, ObjectiveMetadata};
use crate::error::{check_dimension, Error, Result};

/// `F(x; b) = Σ diag_i·x_i² + b·x` with `b_i ~ U[-ζ√3, ζ√3]` independently.
///
/// The noise has per-coordinate variance exactly ζ², so the bounded-variance
/// assumption holds with equality. L = 2·max(diag), σ̄ = 2·min(diag).
#[derive(Clone, Debug)]
pub struct Quadratic {
    diag: Vec<f64>,
    noise_zeta: f64,
    metadata: ObjectiveMetadata,
}

impl Quadratic {
    pub fn new(diag: Vec<f64>, noise_zeta: f64) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("diag", "dimension must be positive"));
        }
        if let Some(bad) = diag.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "diag",
                format!("entries must be positive and finite, got {bad}"),
            ));
        }
        if !(noise_zeta >= 0.0) || !noise_zeta.is_finite() {
            return Err(Error::invalid("noise_zeta", "must be nonnegative"));
        }
        let max = diag.iter().cloned().fold(f64::MIN, f64::max);
        let min = diag.iter().cloned().fold(f64::MAX, f64::min);
        let metadata = ObjectiveMetadata {
            lipschitz: Some(2.0 * max),
            coord_variance_zeta: Some(noise_zeta),
            strong_convexity: Some(2.0 * min),
            grad_bound: None,
            domain_diameter: None,
        };
        Ok(Self {
            diag,
            noise_zeta,
            metadata,
        })
    }

    /// Isotropic `a·‖x‖²` in `d` dimensions.
    pub fn isotropic(d: usize, a: f64, noise_zeta: f64) -> Result<Self> {
        Self::new(vec![a; d], noise_zeta)
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn noise_zeta(&self) -> f64 {
        self.noise_zeta
    }
}

impl Objective for Quadratic {
    type Sample = Vec<f64>;

    fn dimension(&self) -> usize {
        self.diag.len()
    }

    fn metadata(&self) -> &ObjectiveMetadata {
        &self.metadata
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.noise_zeta == 0.0 {
            return Vec::new();
        }
        let half_width = self.noise_zeta * 3f64.sqrt();
        (0..self.diag.len())
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect()
    }

    fn evaluate(&self, x: &[f64], sample: &Vec<f64>) -> Result<f64> {
        check_dimension(self.diag.len(), x.len())?;
        let mut value: f64 = self.diag.iter().zip(x).map(|(a, xi)| a * xi * xi).sum();
        if !sample.is_empty() {
            check_dimension(self.diag.len(), sample.len())?;
            value += sample.iter().zip(x).map(|(b, xi)| b * xi).sum::<f64>();
        }
        Ok(value)
    }

    fn exact(&self) -> Option<&dyn ExactOracle<Vec<f64>>> {
        Some(self)
    }
}

impl ExactOracle<Vec<f64>> for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        self.diag.iter().zip(x).map(|(a, xi)| a * xi * xi).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.diag
            .iter()
            .zip(x)
            .map(|(a, xi)| 2.0 * a * xi)
            .collect()
    }

    fn sample_gradient(&self, x: &[f64], sample: &Vec<f64>) -> Option<Vec<f64>> {
        let mut g = self.gradient(x);
        if !sample.is_empty() {
            for (gi, bi) in g.iter_mut().zip(sample) {
                *gi += bi;
            }
        }
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn hand_evaluated_values() {
        let q = Quadratic::new(vec![1.0, 1.0], 0.0).unwrap();
        let mut r = rng::seeded(0);
        let s = q.sample(&mut r);
        assert_eq!(q.evaluate(&[1.0, 2.0], &s).unwrap(), 5.0);
        assert_eq!(q.gradient(&[1.0, 2.0]), vec![2.0, 4.0]);

        let q1 = Quadratic::new(vec![1.0], 0.0).unwrap();
        assert_eq!(q1.evaluate(&[0.0], &vec![]).unwrap(), 0.0);
        assert_eq!(q1.gradient(&[0.0]), vec![0.0]);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Quadratic::new(vec![], 0.0).is_err());
        assert!(Quadratic::new(vec![1.0, 0.0], 0.0).is_err());
        assert!(Quadratic::new(vec![1.0, -2.0], 0.0).is_err());
        assert!(Quadratic::new(vec![1.0], -0.1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let q = Quadratic::new(vec![1.0, 2.0], 0.0).unwrap();
        assert!(matches!(
            q.evaluate(&[1.0], &vec![]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn metadata_constants() {
        let q = Quadratic::new(vec![1.0, 2.0, 3.0], 0.1).unwrap();
        let m = q.metadata();
        assert_eq!(m.lipschitz, Some(6.0));
        assert_eq!(m.strong_convexity, Some(2.0));
        assert_eq!(m.coord_variance_zeta, Some(0.1));
        assert!((m.full_variance(3).unwrap() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn noiseless_is_sample_independent() {
        let q = Quadratic::new(vec![0.5, 1.5, 2.5], 0.0).unwrap();
        let mut r = rng::seeded(11);
        let x = [0.3, -1.2, 2.0];
        let v0 = q.evaluate(&x, &q.sample(&mut r)).unwrap();
        for _ in 0..50 {
            assert_eq!(q.evaluate(&x, &q.sample(&mut r)).unwrap(), v0);
        }
    }

    #[test]
    fn per_sample_gradient_mean_matches_gradient() {
        // d=3, diag=(1,2,3), ζ=0.1, seed=7, 1e5 samples at (1,1,1).
        let q = Quadratic::new(vec![1.0, 2.0, 3.0], 0.1).unwrap();
        let mut r = rng::seeded(7);
        let x = [1.0, 1.0, 1.0];
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for _ in 0..n {
            let s = q.sample(&mut r);
            let g = q.sample_gradient(&x, &s).unwrap();
            for i in 0..3 {
                sum[i] += g[i];
                sum_sq[i] += g[i] * g[i];
            }
        }
        let expected = [2.0, 4.0, 6.0];
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sum_sq[i] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!((mean - expected[i]).abs() < 3.0 * se, "coord {i}: {mean}");
            // per-coordinate noise variance is ζ² up to sampling error
            assert!((var - 0.01).abs() < 5e-4, "coord {i} variance {var}");
        }
    }
}
