//! Evaluation metrics: posterior-predictive scores, AUROC, train
//! log-likelihood and the normalized KL for synthetic targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blr::{sigmoid, BlrModel};
use super::Target;
use crate::error::{invalid, BviError, Result};
use crate::estimators::{estimate_kl_up_to_const, Source};
use crate::exec::{mean, Exec};
use crate::mixture::{log_sum_exp, Mixture};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn draw_weights<R: Rng + ?Sized>(posterior: &Mixture, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return invalid("need at least one posterior sample");
    }
    Ok(Source::Mixture(posterior).draw(n, rng))
}

/// `(1/n) sum_k sigmoid(x . w_k)` for each row, `w_k ~ posterior`.
pub fn predictive_scores<R: Rng + ?Sized>(
    posterior: &Mixture,
    rows: &[Vec<f64>],
    n_samples: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<Vec<f64>> {
    if rows.iter().any(|x| x.len() != posterior.dim()) {
        return invalid("row and posterior dimensions differ");
    }
    let ws = draw_weights(posterior, n_samples, rng)?;
    Ok(exec.map(rows, |x| {
        let s: Vec<f64> = ws.iter().map(|w| sigmoid(dot(x, w))).collect();
        mean(&s)
    }))
}

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// count one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return invalid("scores and labels differ in length");
    }
    if scores.iter().any(|s| s.is_nan()) {
        return invalid("NaN score");
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(BviError::UndefinedMetric("auroc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Mean over training rows of `ln[(1/n) sum_k p(y_i | x_i, w_k)]`.
pub fn train_log_likelihood<R: Rng + ?Sized>(
    posterior: &Mixture,
    model: &BlrModel,
    n_samples: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<f64> {
    if posterior.dim() != model.dim() {
        return invalid("posterior and model dimensions differ");
    }
    let ws = draw_weights(posterior, n_samples, rng)?;
    let ln_n = (n_samples as f64).ln();
    let per_row = exec.map_range(model.n(), |i| {
        let ll: Vec<f64> = ws.iter().map(|w| model.log_likelihood_row(i, w)).collect();
        log_sum_exp(&ll) - ln_n
    });
    Ok(mean(&per_row))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlOracle {
    pub value: f64,
    pub std_err: f64,
}

/// `KL(q || p)` with the target's known normalizer.
pub fn exact_kl_oracle<R: Rng + ?Sized>(
    q: &Mixture,
    target: &dyn Target,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<KlOracle> {
    let ln_z = target
        .log_normalizer()
        .ok_or_else(|| BviError::UndefinedMetric("target has no known normalizer".into()))?;
    let est = estimate_kl_up_to_const(q, target, n, rng, exec)?;
    Ok(KlOracle { value: est.value + ln_z, std_err: est.std_err })
}
