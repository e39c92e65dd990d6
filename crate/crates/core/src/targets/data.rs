//! Tabular binary-classification data: CSV ingestion, synthetic generation,
//! train/test split and standardization.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::blr::sigmoid;
use crate::error::{invalid, BviError, Result};
use crate::rng::SeedTree;

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Shuffles rows with `seed`, keeps `round(train_fraction * n)` for
    /// training and standardizes every feature with training statistics.
    pub fn split_and_standardize(
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return invalid(format!("train fraction {train_fraction} not in [0, 1]"));
        }
        if features.len() != labels.len() {
            return invalid("features and labels differ in length");
        }
        let n = features.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut SeedTree::new(seed).stream("split", &[]));
        let n_train = (train_fraction * n as f64).round() as usize;
        let test = order.split_off(n_train);
        let mut ds = Self { features, labels, train: order, test, feature_names };
        ds.standardize();
        Ok(ds)
    }

    fn standardize(&mut self) {
        let d = self.features.first().map_or(0, Vec::len);
        if self.train.is_empty() {
            return;
        }
        let m = self.train.len() as f64;
        for j in 0..d {
            let mean = self.train.iter().map(|&i| self.features[i][j]).sum::<f64>() / m;
            let var = self
                .train
                .iter()
                .map(|&i| (self.features[i][j] - mean).powi(2))
                .sum::<f64>()
                / m;
            let sd = var.max(VARIANCE_FLOOR).sqrt();
            for row in &mut self.features {
                row[j] = (row[j] - mean) / sd;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn rows(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<u8>) {
        idx.iter().map(|&i| (self.features[i].clone(), self.labels[i])).unzip()
    }

    pub fn train_rows(&self) -> (Vec<Vec<f64>>, Vec<u8>) {
        self.rows(&self.train)
    }

    pub fn test_rows(&self) -> (Vec<Vec<f64>>, Vec<u8>) {
        self.rows(&self.test)
    }
}

fn parse_label(raw: &str, line: u64) -> Result<u8> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| BviError::Parse { line, message: format!("label {raw:?} is not numeric") })?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(BviError::InvalidData(format!("line {line}: label {raw:?} is not binary")))
    }
}

/// Reads a comma-separated file with a header row. Every column other than
/// `label_column` must be numeric.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, train_fraction: f64, seed: u64) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| BviError::InvalidData(format!("label column {label_column:?} not found in header")))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            BviError::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                labels.push(parse_label(cell, line)?);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| BviError::Parse {
                line,
                message: format!("cell {cell:?} in column {:?} is not numeric", &headers[i]),
            })?;
            if !v.is_finite() {
                return Err(BviError::Parse { line, message: format!("cell {cell:?} is not finite") });
            }
            row.push(v);
        }
        features.push(row);
    }
    if features.is_empty() {
        return Err(BviError::InvalidData("csv has no data rows".into()));
    }
    Dataset::split_and_standardize(features, labels, feature_names, train_fraction, seed)
}

/// Parameters of the synthetic logistic-regression generator.
#[derive(Debug, Clone)]
pub struct SyntheticLogistic {
    pub dim: usize,
    pub rows: usize,
    /// Probability of flipping each generated label.
    pub label_noise: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

/// Draws `x ~ N(0, I)`, a true weight vector `w* ~ N(0, I)` and labels
/// `y ~ Bernoulli(sigmoid(x . w*))`, flipped with probability `label_noise`.
/// Returns the dataset and `w*`.
pub fn synthetic_logistic(cfg: &SyntheticLogistic) -> Result<(Dataset, Vec<f64>)> {
    if cfg.dim == 0 || cfg.rows == 0 {
        return invalid("synthetic data needs positive dimension and row count");
    }
    if !(0.0..=0.5).contains(&cfg.label_noise) {
        return invalid("label noise must lie in [0, 0.5]");
    }
    let mut rng = SeedTree::new(cfg.seed).stream("synthetic-blr", &[]);
    let w_star: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut features = Vec::with_capacity(cfg.rows);
    let mut labels = Vec::with_capacity(cfg.rows);
    for _ in 0..cfg.rows {
        let x: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
        let u: f64 = x.iter().zip(&w_star).map(|(a, b)| a * b).sum();
        let mut y = u8::from(rng.random::<f64>() < sigmoid(u));
        if rng.random::<f64>() < cfg.label_noise {
            y = 1 - y;
        }
        features.push(x);
        labels.push(y);
    }
    let names = (0..cfg.dim).map(|j| format!("x{j}")).collect();
    let ds = Dataset::split_and_standardize(features, labels, names, cfg.train_fraction, cfg.seed)?;
    Ok((ds, w_star))
}
