//! JSON experiment and diagnostic configurations.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zoh_core::{
    AlphaPolicy, CgeConfig, CoordBudget, CoordinateSampling, HgdConfig, OutputRule, RgeConfig,
    SmoothingRegime, StepSchedule,
};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        /// Diagonal curvature; alternatively `dimension` and `scale`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diag: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dimension: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default)]
        noise_zeta: f64,
    },
    Logistic {
        /// CSV with header `label,f0,f1,...`, labels ±1.
        data: PathBuf,
        #[serde(default)]
        l2_reg: f64,
    },
    CwAttack {
        /// Classifier weights as JSON.
        classifier: PathBuf,
        /// CSV with header `label,f0,f1,...`, labels are class indices.
        images: PathBuf,
        lambda: f64,
        #[serde(default)]
        kappa: f64,
        /// Success means at least this many images misclassified.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        success_images: Option<usize>,
    },
}

impl ObjectiveSpec {
    /// Resolves relative data paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            ObjectiveSpec::Quadratic { .. } => {}
            ObjectiveSpec::Logistic { data, .. } => fix(data),
            ObjectiveSpec::CwAttack {
                classifier, images, ..
            } => {
                fix(classifier);
                fix(images);
            }
        }
    }
}

/// A starting point: an explicit vector or one value repeated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Fill(f64),
    Vector(Vec<f64>),
}

impl Default for Point {
    fn default() -> Self {
        Point::Fill(0.0)
    }
}

impl Point {
    pub fn materialize(&self, d: usize) -> Result<Vec<f64>, CliError> {
        match self {
            Point::Fill(v) => Ok(vec![*v; d]),
            Point::Vector(v) if v.len() == d => Ok(v.clone()),
            Point::Vector(v) => Err(CliError::config(format!(
                "x0: expected {d} entries, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    ZoHgd,
    ZoSgd,
    ZoScd,
    ZoSignsgd,
}

fn one() -> usize {
    1
}

fn default_mu() -> f64 {
    1e-3
}

fn default_min_probability() -> f64 {
    zoh_core::importance::PROBABILITY_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub method: MethodKind,
    pub iterations: usize,
    /// Required unless `lr_grid` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepSchedule>,
    /// Constant step sizes to try; the best one is kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub n_r: usize,
    #[serde(default = "default_mu")]
    pub mu_r: f64,
    #[serde(default = "one")]
    pub batch_r: usize,
    #[serde(default)]
    pub n_c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_c_schedule: Option<Vec<usize>>,
    #[serde(default = "default_mu")]
    pub mu_c: f64,
    #[serde(default = "one")]
    pub batch_c: usize,
    /// Overrides `mu_r`/`mu_c` with the theoretical prescription.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingRegime>,
    #[serde(default = "default_sampling")]
    pub sampling: CoordinateSampling,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaPolicy,
    #[serde(default = "default_output")]
    pub output: OutputRule,
    #[serde(default = "default_min_probability")]
    pub min_probability: f64,
}

fn default_sampling() -> CoordinateSampling {
    CoordinateSampling::Importance
}

fn default_alpha() -> AlphaPolicy {
    AlphaPolicy::Optimal
}

fn default_output() -> OutputRule {
    OutputRule::UniformRandomIterate
}

impl MethodSpec {
    /// The core configuration for dimension `d`, step `step` and seed.
    pub fn hgd_config(
        &self,
        d: usize,
        step: StepSchedule,
        seed: u64,
        meta: &zoh_core::ObjectiveMetadata,
    ) -> Result<HgdConfig, CliError> {
        let field = |m: String| CliError::config(format!("method `{}`: {m}", self.name));
        let (mu_c, mu_r) = match self.smoothing {
            None => (self.mu_c, self.mu_r),
            Some(regime) => {
                let n_c = self.n_c.max(1);
                let params = zoh_core::SmoothingParams {
                    d,
                    n_r: self.n_r,
                    iterations: self.iterations,
                    lipschitz: meta.lipschitz,
                    // planning value: uniform probabilities at this budget
                    p_bar: Some(d as f64 / n_c as f64),
                    c_bar: Some(self.min_probability),
                    strong_convexity: meta.strong_convexity,
                };
                zoh_core::theoretical_smoothing(regime, &params)
                    .map_err(|e| field(e.to_string()))?
            }
        };
        let rge = match self.n_r {
            0 => None,
            n_r => Some(RgeConfig::new(n_r, mu_r, self.batch_r).map_err(|e| field(e.to_string()))?),
        };
        let coord_budget = match &self.n_c_schedule {
            Some(s) => CoordBudget::Schedule(s.clone()),
            None => CoordBudget::Fixed(self.n_c),
        };
        let uses_cge = match &coord_budget {
            CoordBudget::Fixed(n) => *n > 0,
            CoordBudget::Schedule(s) => s.iter().any(|n| *n > 0),
        };
        let cge = if uses_cge || self.method == MethodKind::ZoScd {
            Some(CgeConfig::uniform(d, mu_c, self.batch_c).map_err(|e| field(e.to_string()))?)
        } else {
            None
        };
        // baselines pin the knobs they do not expose
        let (rge, coord_budget, sampling, alpha) = match self.method {
            MethodKind::ZoHgd => (rge, coord_budget, self.sampling, self.alpha),
            MethodKind::ZoScd => (
                None,
                coord_budget,
                CoordinateSampling::Uniform,
                AlphaPolicy::Constant(0.0),
            ),
            MethodKind::ZoSgd | MethodKind::ZoSignsgd => (
                rge,
                CoordBudget::Fixed(0),
                self.sampling,
                AlphaPolicy::Constant(1.0),
            ),
        };
        let cfg = HgdConfig {
            iterations: self.iterations,
            step,
            rge,
            cge,
            coord_budget,
            sampling,
            alpha,
            output: self.output,
            min_probability: self.min_probability,
            seed,
            record_iterates: false,
        };
        Ok(cfg)
    }

    /// Step schedules to run: the fixed one, or every grid entry.
    pub fn steps(&self) -> Result<Vec<StepSchedule>, CliError> {
        match (&self.step, &self.lr_grid) {
            (Some(_), Some(_)) => Err(CliError::config(format!(
                "method `{}`: give either `step` or `lr_grid`, not both",
                self.name
            ))),
            (Some(s), None) => Ok(vec![s.clone()]),
            (None, Some(grid)) if !grid.is_empty() => {
                Ok(grid.iter().map(|lr| StepSchedule::Constant(*lr)).collect())
            }
            _ => Err(CliError::config(format!(
                "method `{}`: missing `step`",
                self.name
            ))),
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportOptions {
    /// Write every `stride`-th trace row (the last row is always written).
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Objective level that counts as reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("zoh-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub x0: Point,
    pub methods: Vec<MethodSpec>,
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_report")]
    pub report: ReportOptions,
}

fn default_report() -> ReportOptions {
    ReportOptions {
        stride: 1,
        threshold: None,
    }
}

/// Parses JSON, turning serde errors into a line/column message.
fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::config(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = parse(path)?;
        cfg.objective.resolve_paths(&base_dir(path));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::config("trials: must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(CliError::config("methods: at least one method is required"));
        }
        if self.report.stride == 0 {
            return Err(CliError::config("report.stride: must be at least 1"));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.methods {
            if !names.insert(&m.name) {
                return Err(CliError::config(format!(
                    "methods: duplicate name `{}`",
                    m.name
                )));
            }
            if m.name.is_empty()
                || !m
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(CliError::config(format!(
                    "methods: name `{}` must be nonempty and use only letters, digits, `-` and `_`",
                    m.name
                )));
            }
            m.steps()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn default_grid_n_r() -> Vec<usize> {
    vec![1, 4, 16]
}

fn default_grid_n_c() -> Vec<usize> {
    vec![1, 4, 8]
}

fn default_grid_mu() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1]
}

fn default_grid_batch() -> Vec<usize> {
    vec![2]
}

/// Axes of the diagnostic grid; every combination is checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_n_r")]
    pub n_r: Vec<usize>,
    /// Budgets above the problem dimension are clamped to it.
    #[serde(default = "default_grid_n_c")]
    pub n_c: Vec<usize>,
    /// Used for both `mu_r` and `mu_c`.
    #[serde(default = "default_grid_mu")]
    pub mu: Vec<f64>,
    #[serde(default = "default_grid_batch")]
    pub batch: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_r: default_grid_n_r(),
            n_c: default_grid_n_c(),
            mu: default_grid_mu(),
            batch: default_grid_batch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagTarget {
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub x: Point,
}

fn default_trials() -> usize {
    100_000
}

fn default_pairs() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagConfig {
    pub targets: Vec<DiagTarget>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Fixed combination coefficient for the hybrid check; α* when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Multiplies every objective's Lipschitz constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_scale: Option<f64>,
    #[serde(default = "default_pairs")]
    pub smoothness_pairs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl DiagConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: DiagConfig = parse(path)?;
        let base = base_dir(path);
        for t in &mut cfg.targets {
            t.objective.resolve_paths(&base);
        }
        if cfg.trials == 0 {
            return Err(CliError::config("trials: must be at least 1"));
        }
        Ok(cfg)
    }
}
