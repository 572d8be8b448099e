//! `zoh diag`: estimator bound checks over a settings grid.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use zoh_core::diagnostics::{check_bounds, BoundReport, DiagnosticSettings};
use zoh_core::{CgeConfig, RgeConfig};

use crate::config::DiagConfig;
use crate::problem::Problem;
use crate::{with_objective, CliError};

#[derive(Clone, Debug, Serialize)]
pub struct TargetReport {
    pub target: usize,
    pub objective: crate::config::ObjectiveSpec,
    pub reports: Vec<BoundReport>,
}

#[derive(Debug)]
pub struct DiagOutput {
    pub path: PathBuf,
    pub targets: Vec<TargetReport>,
}

impl DiagOutput {
    pub fn passed(&self) -> bool {
        self.targets
            .iter()
            .all(|t| t.reports.iter().all(|r| r.passed))
    }

    pub fn reports(&self) -> impl Iterator<Item = &BoundReport> {
        self.targets.iter().flat_map(|t| &t.reports)
    }
}

/// One line per checked configuration.
pub fn describe(target: usize, r: &BoundReport) -> String {
    let mut line = format!(
        "target {target} n_r={} n_c={} mu={:e} batch={} alpha={:.4} L={}: ",
        r.n_r, r.n_c, r.mu_r, r.batch_r, r.alpha, r.lipschitz
    );
    if r.passed {
        line.push_str("pass");
    } else {
        let failed: Vec<String> = r
            .failures()
            .map(|c| format!("{} ({:.6e} > {:.6e})", c.name, c.empirical, c.bound))
            .collect();
        line.push_str("FAIL ");
        line.push_str(&failed.join(", "));
    }
    line
}

/// Runs every grid combination for every target and writes `bounds.json`.
///
/// Returns the output even when checks fail; callers decide the exit code.
pub fn run_diagnostics(
    cfg: &DiagConfig,
    out: Option<PathBuf>,
    lipschitz_scale: Option<f64>,
    mut progress: impl FnMut(&str),
) -> Result<DiagOutput, CliError> {
    let g = &cfg.grid;
    if cfg.targets.is_empty()
        || g.n_r.is_empty()
        || g.n_c.is_empty()
        || g.mu.is_empty()
        || g.batch.is_empty()
    {
        return Err(CliError::config(
            "no configurations: every grid axis and `targets` must be nonempty",
        ));
    }
    if g.n_r.contains(&0) || g.batch.contains(&0) {
        return Err(CliError::config(
            "grid: n_r and batch entries must be at least 1",
        ));
    }
    let scale = lipschitz_scale.or(cfg.lipschitz_scale);
    if let Some(s) = scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(CliError::config("lipschitz_scale: must be positive"));
        }
    }
    let mut targets = Vec::new();
    for (ti, target) in cfg.targets.iter().enumerate() {
        let problem = Problem::build(&target.objective)?;
        let d = problem.dimension();
        let x = target.x.materialize(d)?;
        let lipschitz = problem.metadata().lipschitz.ok_or_else(|| {
            CliError::config(format!(
                "target {ti}: objective metadata `lipschitz` is unknown"
            ))
        })?;
        let mut reports = Vec::new();
        let mut seed = cfg.base_seed;
        for &n_r in &g.n_r {
            for &n_c in &g.n_c {
                let n_c = n_c.min(d);
                for &mu in &g.mu {
                    for &batch in &g.batch {
                        let settings = DiagnosticSettings {
                            rge: RgeConfig::new(n_r, mu, batch)
                                .map_err(|e| CliError::config(e.to_string()))?,
                            cge: CgeConfig::uniform(d, mu, batch)
                                .map_err(|e| CliError::config(e.to_string()))?,
                            n_c,
                            alpha: cfg.alpha,
                            trials: cfg.trials,
                            seed,
                            lipschitz_override: scale.map(|s| s * lipschitz),
                            smoothness_pairs: cfg.smoothness_pairs,
                        };
                        // check_bounds uses seed, seed+1, seed+2
                        seed = seed.wrapping_add(3);
                        let report =
                            with_objective!(&problem, obj => check_bounds(obj, &x, &settings))
                                .map_err(|e| match e {
                                    zoh_core::Error::MissingMetadata(_) => {
                                        CliError::config(format!("target {ti}: {e}"))
                                    }
                                    _ => CliError::runtime(format!("target {ti}: {e}")),
                                })?;
                        progress(&describe(ti, &report));
                        reports.push(report);
                    }
                }
            }
        }
        targets.push(TargetReport {
            target: ti,
            objective: target.objective.clone(),
            reports,
        });
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join("bounds.json");
    let json = serde_json::to_string_pretty(&targets).expect("reports serialize");
    fs::write(&path, json).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(DiagOutput { path, targets })
}
