//! `zoh compare`: aggregates summary files from several runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::{median, quantile, CliError};

#[derive(Debug, Deserialize)]
struct SummaryRow {
    method: String,
    final_objective: f64,
    queries_to_threshold: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodStats {
    pub method: String,
    pub runs: usize,
    pub reached: usize,
    pub final_median: f64,
    pub final_iqr: f64,
    /// Unreached runs count as infinite.
    pub queries_median: f64,
    pub queries_iqr: f64,
}

fn objective_header(text: &str) -> Option<&str> {
    text.lines().find_map(|l| l.strip_prefix("# objective: "))
}

fn iqr(v: &[f64]) -> f64 {
    let (q1, q3) = (quantile(v, 0.25), quantile(v, 0.75));
    if q1.is_infinite() && q3.is_infinite() {
        // inf - inf would be NaN; the spread of all-unreached runs is nil
        0.0
    } else {
        q3 - q1
    }
}

/// Pools rows from every summary by method, keeping first-seen order.
pub fn compare(paths: &[impl AsRef<Path>]) -> Result<Vec<MethodStats>, CliError> {
    if paths.len() < 2 {
        return Err(CliError::config("compare needs at least two summary files"));
    }
    let mut objective: Option<String> = None;
    let mut order: Vec<String> = Vec::new();
    let mut pooled: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let header = objective_header(&text).ok_or_else(|| {
            CliError::config(format!("{}: missing `# objective` header", path.display()))
        })?;
        match &objective {
            None => objective = Some(header.to_string()),
            Some(o) if o != header => {
                return Err(CliError::config(format!(
                    "{}: objective differs from {}",
                    path.display(),
                    paths[0].as_ref().display()
                )))
            }
            Some(_) => {}
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for row in reader.deserialize::<SummaryRow>() {
            let row = row.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let entry = pooled.entry(row.method.clone()).or_insert_with(|| {
                order.push(row.method.clone());
                Default::default()
            });
            entry.0.push(row.final_objective);
            entry
                .1
                .push(row.queries_to_threshold.map_or(f64::INFINITY, |q| q as f64));
        }
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let (fin, q) = &pooled[&m];
            MethodStats {
                runs: fin.len(),
                reached: q.iter().filter(|v| v.is_finite()).count(),
                final_median: median(fin),
                final_iqr: iqr(fin),
                queries_median: median(q),
                queries_iqr: iqr(q),
                method: m,
            }
        })
        .collect())
}

pub fn to_markdown(stats: &[MethodStats]) -> String {
    let mut s = String::from(
        "| method | runs | reached | final median | final IQR | queries median | queries IQR |\n\
         |---|---|---|---|---|---|---|\n",
    );
    for m in stats {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.6e} | {:.6e} | {} | {} |",
            m.method,
            m.runs,
            m.reached,
            m.final_median,
            m.final_iqr,
            m.queries_median,
            m.queries_iqr
        );
    }
    s
}

pub fn to_csv(stats: &[MethodStats]) -> String {
    let mut s =
        String::from("method,runs,reached,final_median,final_iqr,queries_median,queries_iqr\n");
    for m in stats {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            m.method,
            m.runs,
            m.reached,
            m.final_median,
            m.final_iqr,
            m.queries_median,
            m.queries_iqr
        );
    }
    s
}
