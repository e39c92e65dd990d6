use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::mixture::Mixture;
use crate::rng::SeedTree;
use crate::targets::metrics::{auroc, exact_kl_oracle, predictive_scores, train_log_likelihood};
use crate::targets::{BlrModel, Target};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_ll: Option<f64>,
    pub test_auroc: Option<f64>,
    pub exact_kl: Option<f64>,
}

/// Per-iteration evaluation of the current iterate. Runs outside the timed
/// part of the loop and draws only from the `("eval", [t])` stream.
pub trait Evaluator {
    fn evaluate(&self, q: &Mixture, t: i64, seeds: &SeedTree, exec: Exec) -> Result<Metrics>;
}

pub struct NoMetrics;

impl Evaluator for NoMetrics {
    fn evaluate(&self, _: &Mixture, _: i64, _: &SeedTree, _: Exec) -> Result<Metrics> {
        Ok(Metrics::default())
    }
}

/// Normalized KL for targets with a known normalizer.
pub struct SyntheticEvaluator<'a> {
    pub target: &'a dyn Target,
    pub samples: usize,
}

impl Evaluator for SyntheticEvaluator<'_> {
    fn evaluate(&self, q: &Mixture, t: i64, seeds: &SeedTree, exec: Exec) -> Result<Metrics> {
        let kl = exact_kl_oracle(q, self.target, self.samples, &mut seeds.stream("eval", &[t]), exec)?;
        Ok(Metrics { exact_kl: Some(kl.value), ..Default::default() })
    }
}

/// Train log-likelihood and test AUROC for logistic regression.
pub struct BlrEvaluator<'a> {
    pub train: &'a BlrModel,
    pub test_rows: &'a [Vec<f64>],
    pub test_labels: &'a [u8],
    pub samples: usize,
}

impl Evaluator for BlrEvaluator<'_> {
    fn evaluate(&self, q: &Mixture, t: i64, seeds: &SeedTree, exec: Exec) -> Result<Metrics> {
        let mut rng = seeds.stream("eval", &[t]);
        let train_ll = train_log_likelihood(q, self.train, self.samples, &mut rng, exec)?;
        let test_auroc = if self.test_rows.is_empty() {
            None
        } else {
            let scores = predictive_scores(q, self.test_rows, self.samples, &mut rng, exec)?;
            auroc(&scores, self.test_labels).ok()
        };
        Ok(Metrics { train_ll: Some(train_ll), test_auroc, exact_kl: None })
    }
}
