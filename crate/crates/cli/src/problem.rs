//! Builds objectives from their config specs.

use zoh_core::objectives::{load_dataset_csv, Dataset};
use zoh_core::{CwAttack, Logistic, Mlp, Objective, ObjectiveMetadata, Quadratic};

use crate::config::ObjectiveSpec;
use crate::CliError;

pub enum Problem {
    Quadratic(Quadratic),
    Logistic(Logistic),
    Attack {
        attack: CwAttack,
        success_images: Option<usize>,
    },
}

/// Runs `$body` with `$obj` bound to the concrete objective.
#[macro_export]
macro_rules! with_objective {
    ($problem:expr, $obj:ident => $body:expr) => {
        match $problem {
            $crate::problem::Problem::Quadratic($obj) => $body,
            $crate::problem::Problem::Logistic($obj) => $body,
            $crate::problem::Problem::Attack { attack: $obj, .. } => $body,
        }
    };
}

fn data_err(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("objective.{what}: {e}"))
}

fn load(path: &std::path::Path, what: &str) -> Result<Dataset, CliError> {
    load_dataset_csv(path).map_err(|e| data_err(what, format!("{}: {e}", path.display())))
}

impl Problem {
    pub fn build(spec: &ObjectiveSpec) -> Result<Self, CliError> {
        match spec {
            ObjectiveSpec::Quadratic {
                diag,
                dimension,
                scale,
                noise_zeta,
            } => {
                let diag = match (diag, dimension) {
                    (Some(d), None) if scale.is_none() => d.clone(),
                    (None, Some(n)) => vec![scale.unwrap_or(1.0); *n],
                    _ => {
                        return Err(CliError::config(
                            "objective: quadratic needs either `diag` or `dimension` (with optional `scale`)",
                        ))
                    }
                };
                Quadratic::new(diag, *noise_zeta)
                    .map(Problem::Quadratic)
                    .map_err(|e| data_err("quadratic", e))
            }
            ObjectiveSpec::Logistic { data, l2_reg } => {
                let data = load(data, "data")?;
                Logistic::new(data, *l2_reg)
                    .map(Problem::Logistic)
                    .map_err(|e| data_err("logistic", e))
            }
            ObjectiveSpec::CwAttack {
                classifier,
                images,
                lambda,
                kappa,
                success_images,
            } => {
                let mlp = Mlp::load(classifier).map_err(|e| {
                    data_err("classifier", format!("{}: {e}", classifier.display()))
                })?;
                let images = load(images, "images")?;
                let attack = CwAttack::new(mlp, images, *lambda, *kappa)
                    .map_err(|e| data_err("cw_attack", e))?;
                if let Some(k) = success_images {
                    if *k == 0 || *k > attack.num_images() {
                        return Err(CliError::config(format!(
                            "objective.success_images: must lie in 1..={}",
                            attack.num_images()
                        )));
                    }
                }
                Ok(Problem::Attack {
                    attack,
                    success_images: *success_images,
                })
            }
        }
    }

    pub fn dimension(&self) -> usize {
        with_objective!(self, o => o.dimension())
    }

    pub fn metadata(&self) -> &ObjectiveMetadata {
        with_objective!(self, o => o.metadata())
    }
}
