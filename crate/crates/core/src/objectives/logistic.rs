use rand::Rng;

use super::{Dataset, ExactOracle, Objective, ObjectiveMetadata};
use crate::error::{check_dimension, Error, Result};

/// Regularized logistic loss; ξ is a uniformly drawn row index.
///
/// `F(x; i) = log(1 + exp(-y_i·a_i·x)) + (l2_reg/2)·‖x‖²`.
///
/// Metadata uses per-sample bounds: L = max_i ‖a_i‖²/4 + l2_reg and
/// ζ = max_{i,j} |a_ij| (the per-coordinate gradient deviation is a
/// centered second moment of `y_i·a_ij·s` with `s ∈ (0, 1)`).
#[derive(Clone, Debug)]
pub struct Logistic {
    data: Dataset,
    l2_reg: f64,
    metadata: ObjectiveMetadata,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Logistic {
    pub fn new(data: Dataset, l2_reg: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("dataset", "must contain at least one row"));
        }
        if let Some(bad) = data.labels.iter().find(|y| **y != 1.0 && **y != -1.0) {
            return Err(Error::invalid(
                "labels",
                format!("logistic labels must be -1 or +1, got {bad}"),
            ));
        }
        if !(l2_reg >= 0.0) || !l2_reg.is_finite() {
            return Err(Error::invalid("l2_reg", "must be nonnegative"));
        }
        let max_row_sq = (0..data.len())
            .map(|i| dot(data.row(i), data.row(i)))
            .fold(0.0, f64::max);
        let max_abs = data.features.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let metadata = ObjectiveMetadata {
            lipschitz: Some(max_row_sq / 4.0 + l2_reg),
            coord_variance_zeta: Some(max_abs),
            strong_convexity: (l2_reg > 0.0).then_some(l2_reg),
            grad_bound: None,
            domain_diameter: None,
        };
        Ok(Self {
            data,
            l2_reg,
            metadata,
        })
    }

    pub fn from_parts(
        features: Vec<f64>,
        labels: Vec<f64>,
        dimension: usize,
        l2_reg: f64,
    ) -> Result<Self> {
        Self::new(Dataset::new(features, labels, dimension)?, l2_reg)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn row_loss(&self, x: &[f64], i: usize) -> f64 {
        let margin = self.data.labels[i] * dot(self.data.row(i), x);
        softplus(-margin) + 0.5 * self.l2_reg * dot(x, x)
    }

    fn add_row_gradient(&self, x: &[f64], i: usize, scale: f64, out: &mut [f64]) {
        let y = self.data.labels[i];
        let a = self.data.row(i);
        let coeff = -y * sigmoid(-y * dot(a, x)) * scale;
        for ((o, aj), xj) in out.iter_mut().zip(a).zip(x) {
            *o += coeff * aj + scale * self.l2_reg * xj;
        }
    }
}

impl Objective for Logistic {
    type Sample = usize;

    fn dimension(&self) -> usize {
        self.data.dimension
    }

    fn metadata(&self) -> &ObjectiveMetadata {
        &self.metadata
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.data.len())
    }

    fn evaluate(&self, x: &[f64], sample: &usize) -> Result<f64> {
        check_dimension(self.data.dimension, x.len())?;
        if *sample >= self.data.len() {
            return Err(Error::IndexOutOfRange {
                index: *sample,
                dimension: self.data.len(),
            });
        }
        Ok(self.row_loss(x, *sample))
    }

    fn exact(&self) -> Option<&dyn ExactOracle<usize>> {
        Some(self)
    }
}

impl ExactOracle<usize> for Logistic {
    fn value(&self, x: &[f64]) -> f64 {
        let n = self.data.len();
        (0..n).map(|i| self.row_loss(x, i)).sum::<f64>() / n as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.data.len();
        let mut g = vec![0.0; self.data.dimension];
        for i in 0..n {
            self.add_row_gradient(x, i, 1.0 / n as f64, &mut g);
        }
        g
    }

    fn sample_gradient(&self, x: &[f64], sample: &usize) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.data.dimension];
        self.add_row_gradient(x, *sample, 1.0, &mut g);
        Some(g)
    }
}
