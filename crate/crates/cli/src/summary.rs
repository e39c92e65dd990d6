//! Replicate summaries and per-iteration aggregates computed from traces.

use boostvi::IterationTrace;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl Stats {
    /// `None` when the list is empty or any entry is missing.
    pub fn of(values: &[Option<f64>]) -> Option<Stats> {
        let xs: Vec<f64> = values.iter().copied().collect::<Option<_>>()?;
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
        let mut sorted = xs;
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
        Some(Stats { median, mean, std })
    }
}

/// Final-iterate statistics across replicates, one per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub replicates: usize,
    pub seeds: Vec<u64>,
    pub train_ll: Option<Stats>,
    pub test_auroc: Option<Stats>,
    pub wall_seconds: Option<Stats>,
    pub kl: Option<Stats>,
    pub exact_kl: Option<Stats>,
    pub components: Option<Stats>,
}

pub fn summarize(method: &str, seeds: &[u64], traces: &[Vec<IterationTrace>]) -> Summary {
    let last: Vec<Option<&IterationTrace>> = traces.iter().map(|t| t.last()).collect();
    let col = |f: fn(&IterationTrace) -> Option<f64>| Stats::of(&last.iter().map(|r| r.and_then(f)).collect::<Vec<_>>());
    Summary {
        method: method.to_string(),
        replicates: traces.len(),
        seeds: seeds.to_vec(),
        train_ll: col(|r| r.train_ll),
        test_auroc: col(|r| r.test_auroc),
        wall_seconds: col(|r| Some(r.wall_seconds)),
        kl: col(|r| Some(r.kl)),
        exact_kl: col(|r| r.exact_kl),
        components: col(|r| Some(r.components as f64)),
    }
}

/// One row of the method table written by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub replicates: usize,
    pub train_ll_median: Option<f64>,
    pub train_ll_mean: Option<f64>,
    pub train_ll_std: Option<f64>,
    pub test_auroc_median: Option<f64>,
    pub test_auroc_mean: Option<f64>,
    pub test_auroc_std: Option<f64>,
    pub wall_seconds_median: Option<f64>,
    pub wall_seconds_mean: Option<f64>,
    pub wall_seconds_std: Option<f64>,
    pub kl_median: Option<f64>,
    pub kl_std: Option<f64>,
    pub exact_kl_median: Option<f64>,
    pub exact_kl_std: Option<f64>,
    pub components_median: Option<f64>,
}

impl From<&Summary> for SummaryRow {
    fn from(s: &Summary) -> Self {
        let m = |x: &Option<Stats>| x.map(|s| s.median);
        let a = |x: &Option<Stats>| x.map(|s| s.mean);
        let d = |x: &Option<Stats>| x.map(|s| s.std);
        SummaryRow {
            method: s.method.clone(),
            replicates: s.replicates,
            train_ll_median: m(&s.train_ll),
            train_ll_mean: a(&s.train_ll),
            train_ll_std: d(&s.train_ll),
            test_auroc_median: m(&s.test_auroc),
            test_auroc_mean: a(&s.test_auroc),
            test_auroc_std: d(&s.test_auroc),
            wall_seconds_median: m(&s.wall_seconds),
            wall_seconds_mean: a(&s.wall_seconds),
            wall_seconds_std: d(&s.wall_seconds),
            kl_median: m(&s.kl),
            kl_std: d(&s.kl),
            exact_kl_median: m(&s.exact_kl),
            exact_kl_std: d(&s.exact_kl),
            components_median: m(&s.components),
        }
    }
}

/// Cross-replicate statistics at one iteration index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerIteration {
    pub t: i64,
    pub runs: usize,
    pub kl_median: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
    pub exact_kl_median: Option<f64>,
    pub exact_kl_std: Option<f64>,
    pub train_ll_median: Option<f64>,
    pub train_ll_std: Option<f64>,
    pub components_median: f64,
}

/// Rows are aligned by position, so runs that stopped early only count
/// toward the iterations they reached.
pub fn per_iteration(traces: &[Vec<IterationTrace>]) -> Vec<PerIteration> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let rows: Vec<&IterationTrace> = traces.iter().filter_map(|t| t.get(i)).collect();
            let stats = |f: fn(&IterationTrace) -> Option<f64>| Stats::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let kl = stats(|r| Some(r.kl)).expect("at least one row");
            let exact = stats(|r| r.exact_kl);
            let ll = stats(|r| r.train_ll);
            PerIteration {
                t: rows[0].t,
                runs: rows.len(),
                kl_median: kl.median,
                kl_mean: kl.mean,
                kl_std: kl.std,
                exact_kl_median: exact.map(|s| s.median),
                exact_kl_std: exact.map(|s| s.std),
                train_ll_median: ll.map(|s| s.median),
                train_ll_std: ll.map(|s| s.std),
                components_median: stats(|r| Some(r.components as f64)).expect("at least one row").median,
            }
        })
        .collect()
}
