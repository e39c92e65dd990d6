use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::Metrics;
use crate::corrective::DirectionKind;
use crate::error::{BviError, Result};
use crate::stepsize::StepKind;

/// One row per iteration; `t = -1` is the initialization. Every row has the
/// same keys, with `null` (empty in CSV) where a field does not apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub t: i64,
    pub step_kind: Option<StepKind>,
    pub direction: Option<DirectionKind>,
    pub gamma: Option<f64>,
    /// Curvature estimate after the step (adaptive engine only).
    pub curvature: Option<f64>,
    pub gap: Option<f64>,
    /// KL up to the log-normalizer, after the update.
    pub kl: f64,
    pub kl_std_err: f64,
    pub components: usize,
    pub params: usize,
    /// Cumulative Monte-Carlo draws.
    pub samples_spent: usize,
    pub proposals_tried: usize,
    /// Cumulative run time excluding evaluation.
    pub wall_seconds: f64,
    pub train_ll: Option<f64>,
    pub test_auroc: Option<f64>,
    pub exact_kl: Option<f64>,
}

impl IterationTrace {
    pub fn with_metrics(mut self, m: Metrics) -> Self {
        self.train_ll = m.train_ll;
        self.test_auroc = m.test_auroc;
        self.exact_kl = m.exact_kl;
        self
    }
}

/// Appends rows to a JSONL file and a CSV mirror, flushing both per row.
pub struct TraceWriter {
    jsonl: BufWriter<File>,
    csv: csv::Writer<File>,
}

impl TraceWriter {
    pub fn create(jsonl_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            jsonl: BufWriter::new(File::create(jsonl_path)?),
            csv: csv::Writer::from_path(csv_path)?,
        })
    }

    pub fn write(&mut self, row: &IterationTrace) -> Result<()> {
        serde_json::to_writer(&mut self.jsonl, row)?;
        self.jsonl.write_all(b"\n")?;
        self.jsonl.flush()?;
        self.csv.serialize(row)?;
        self.csv.flush()?;
        Ok(())
    }
}

pub fn read_trace_jsonl(path: impl AsRef<Path>) -> Result<Vec<IterationTrace>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| BviError::Parse { line: i as u64 + 1, message: e.to_string() })?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (j, c) = (dir.path().join("t.jsonl"), dir.path().join("t.csv"));
        let rows = vec![
            IterationTrace { t: -1, kl: 1.5, components: 1, params: 2, ..Default::default() },
            IterationTrace {
                t: 0,
                step_kind: Some(StepKind::FallbackPredefined),
                direction: Some(DirectionKind::VanillaFW),
                gamma: Some(1.0),
                curvature: Some(0.4),
                gap: Some(0.25),
                kl: 0.5,
                components: 2,
                params: 4,
                exact_kl: Some(0.1),
                ..Default::default()
            },
        ];
        let mut w = TraceWriter::create(&j, &c).unwrap();
        for r in &rows {
            w.write(r).unwrap();
        }
        drop(w);
        assert_eq!(read_trace_jsonl(&j).unwrap(), rows);
        let back: Vec<IterationTrace> =
            csv::Reader::from_path(&c).unwrap().deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, rows);
        let text = std::fs::read_to_string(&j).unwrap();
        assert!(text.contains("\"step_kind\":\"fallback_predefined\""));
        assert!(text.contains("\"direction\":\"vanilla_fw\""));
    }
}
