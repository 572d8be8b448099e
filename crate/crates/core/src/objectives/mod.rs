//! Black-box stochastic objectives `f(x) = E_ξ F(x; ξ)`.
//!
//! An [`Objective`] only exposes sampling and evaluation. Estimators and
//! optimizers never see gradients; the [`ExactOracle`] exists for tests and
//! diagnostics only. All evaluations made during a run go through a
//! [`Counted`] wrapper so the query cost is tracked exactly.

mod attack;
mod data;
mod logistic;
mod quadratic;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use attack::{CwAttack, Mlp, MlpLayer};
pub use data::{load_dataset_csv, Dataset};
pub use logistic::Logistic;
pub use quadratic::Quadratic;

/// Problem constants used by the theory. `None` means unknown.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMetadata {
    pub lipschitz: Option<f64>,
    /// Per-coordinate standard deviation bound ζ of the stochastic gradient.
    pub coord_variance_zeta: Option<f64>,
    pub strong_convexity: Option<f64>,
    pub grad_bound: Option<f64>,
    pub domain_diameter: Option<f64>,
}

impl ObjectiveMetadata {
    /// σ² = d·ζ².
    pub fn full_variance(&self, dimension: usize) -> Option<f64> {
        self.coord_variance_zeta
            .map(|zeta| dimension as f64 * zeta * zeta)
    }
}

pub trait Objective: Sync {
    type Sample: Clone + Send + Sync + std::fmt::Debug;

    fn dimension(&self) -> usize;

    fn metadata(&self) -> &ObjectiveMetadata;

    /// Draws ξ ~ Ξ.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Sample;

    /// F(x; ξ). Deterministic in `(x, sample)`.
    fn evaluate(&self, x: &[f64], sample: &Self::Sample) -> Result<f64>;

    fn exact(&self) -> Option<&dyn ExactOracle<Self::Sample>> {
        None
    }
}

/// Ground truth for built-in problems.
pub trait ExactOracle<S>: Sync {
    /// f(x) = E_ξ F(x; ξ).
    fn value(&self, x: &[f64]) -> f64;

    /// ∇f(x).
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// ∇F(x; ξ), when the problem has a closed form for it.
    fn sample_gradient(&self, _x: &[f64], _sample: &S) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounter {
    /// Function evaluations actually performed.
    pub actual_evaluations: u64,
    /// Accumulated `2·n_r·|B_r| + 2·n_c·|B_c|` per iteration.
    pub nominal_fqc: u64,
}

impl QueryCounter {
    pub fn add_nominal(&mut self, n_r: usize, batch_r: usize, n_c: usize, batch_c: usize) {
        self.nominal_fqc += 2 * (n_r * batch_r + n_c * batch_c) as u64;
    }
}

/// An objective borrowed for one run, with its query counter.
#[derive(Debug)]
pub struct Counted<'a, O: ?Sized> {
    objective: &'a O,
    counter: QueryCounter,
}

impl<'a, O: Objective + ?Sized> Counted<'a, O> {
    pub fn new(objective: &'a O) -> Self {
        Self {
            objective,
            counter: QueryCounter::default(),
        }
    }

    pub fn objective(&self) -> &'a O {
        self.objective
    }

    pub fn dimension(&self) -> usize {
        self.objective.dimension()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> O::Sample {
        self.objective.sample(rng)
    }

    /// Counts the call even if evaluation fails.
    pub fn evaluate(&mut self, x: &[f64], sample: &O::Sample) -> Result<f64> {
        self.counter.actual_evaluations += 1;
        self.objective.evaluate(x, sample)
    }

    pub fn counter(&self) -> QueryCounter {
        self.counter
    }

    pub fn counter_mut(&mut self) -> &mut QueryCounter {
        &mut self.counter
    }

    pub fn queries(&self) -> u64 {
        self.counter.actual_evaluations
    }
}
