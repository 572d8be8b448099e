use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major feature matrix with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
    pub dimension: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dimension: usize) -> Result<Self> {
        if dimension == 0 || features.len() != labels.len() * dimension {
            return Err(Error::Data(format!(
                "{} feature values do not form {} rows of width {dimension}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            dimension,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Parses CSV with header `label,f0,f1,...`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(e.to_string()))?
            .clone();
        if headers.get(0) != Some("label") || headers.len() < 2 {
            return Err(Error::Data("header must be `label,f0,f1,...`".to_string()));
        }
        for (j, h) in headers.iter().skip(1).enumerate() {
            if h != format!("f{j}") {
                return Err(Error::Data(format!(
                    "header column {} is `{h}`, expected `f{j}`",
                    j + 1
                )));
            }
        }
        let dimension = headers.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Data(e.to_string()))?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {}: `{s}` is not a number", line + 1)))
            };
            labels.push(parse(&record[0])?);
            for v in record.iter().skip(1) {
                features.push(parse(v)?);
            }
        }
        Self::new(features, labels, dimension)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for j in 0..self.dimension {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{}", self.labels[i]));
            for v in self.row(i) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    Dataset::from_csv(file)
}
