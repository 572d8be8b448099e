//! Zeroth-order stochastic optimization with a hybrid gradient estimator.
//!
//! The hybrid estimator mixes a random-direction estimate (RGE) with an
//! importance-sampled coordinate-wise estimate (CGE). The RGE doubles as a
//! cheap probe: its magnitudes decide which coordinates the CGE spends its
//! query budget on.
//!
//! Modules:
//! - [`objectives`]: black-box stochastic objectives, exact oracles and query accounting.
//! - [`estimators`]: RGE, full and sampled CGE, and their convex combination.
//! - [`importance`]: coordinate-selection probabilities, the combination coefficient,
//!   and theoretical step-size / smoothing prescriptions.
//! - [`optimize`]: ZO-HGD and the ZO-SGD / ZO-SCD / ZO-signSGD baselines.
//! - [`diagnostics`]: closed-form variance and second-moment bounds checked against
//!   Monte Carlo moments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod importance;
pub mod objectives;
pub mod optimize;
pub mod rng;

pub use error::{Error, Result};
pub use estimators::{
    cge_component, cge_full, cge_sampled, hge, rge, sample_unit_sphere, CgeConfig, EstimatorKind,
    GradientEstimate, RgeConfig,
};
pub use importance::{
    optimal_alpha, sample_coordinate_set, sparsification_probabilities, sparsify,
    theoretical_smoothing, theoretical_step_size, AlphaPolicy, ProbabilityVector, SmoothingParams,
    SmoothingRegime,
};
pub use objectives::{
    Counted, CwAttack, ExactOracle, Logistic, Mlp, Objective, ObjectiveMetadata, Quadratic,
    QueryCounter,
};
pub use optimize::{
    zo_hgd, zo_scd, zo_sgd, zo_signsgd, CoordBudget, CoordinateSampling, HgdConfig, OutputRule,
    RunRecord, RunTrace, StepSchedule,
};
