//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoh_core::Quadratic;

/// Ill-conditioned quadratic with curvatures spread over `[1, 100]`.
pub fn quadratic(d: usize, zeta: f64) -> Quadratic {
    let diag = (0..d)
        .map(|i| 1.0 + 99.0 * i as f64 / (d.max(2) - 1) as f64)
        .collect();
    Quadratic::new(diag, zeta).expect("valid quadratic")
}

/// A heavy-tailed magnitude vector, like an RGE probe.
pub fn probe(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.random::<f64>().powi(4)).collect()
}
