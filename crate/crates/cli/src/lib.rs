//! Experiment runner behind the `zoh` binary.
//!
//! Configs are JSON documents; see [`config`]. `run` writes one trace per
//! (method, trial) plus a summary CSV, `diag` checks the estimator bounds on a
//! grid of settings, and `compare` aggregates summaries.

pub mod compare;
pub mod config;
pub mod diag;
pub mod problem;
pub mod run;

use std::fmt;

/// Errors carry the process exit code they map to.
#[derive(Debug)]
pub enum CliError {
    /// Bad or unreadable configuration (exit 1).
    Config(String),
    /// A run aborted or output could not be written (exit 2).
    Runtime(String),
    /// A diagnostic check failed (exit 3).
    Diagnostic(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Diagnostic(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
            CliError::Diagnostic(m) => write!(f, "diagnostic failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Median of a sample; `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile of a sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}
