use super::{Dataset, Target};
use crate::error::{invalid, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln sigmoid(u)` without overflow.
#[inline]
pub(crate) fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Bayesian logistic regression with a standard normal prior on the weights.
/// The log joint is the target density over the weight vector.
#[derive(Debug, Clone)]
pub struct BlrModel {
    dim: usize,
    /// Row-major `n x d` design matrix.
    x: Vec<f64>,
    y: Vec<u8>,
}

impl BlrModel {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if rows.is_empty() {
            return invalid("design matrix has no rows");
        }
        if rows.len() != labels.len() {
            return invalid("rows and labels differ in length");
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return invalid("design matrix rows must share a positive length");
        }
        if labels.iter().any(|y| *y > 1) {
            return invalid("labels must be 0 or 1");
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("design matrix contains non-finite values");
        }
        Ok(Self { dim, x: rows.into_iter().flatten().collect(), y: labels })
    }

    /// Model over the training rows of a dataset.
    pub fn from_train(ds: &Dataset) -> Result<Self> {
        let (x, y) = ds.train_rows();
        Self::new(x, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.y[i]
    }

    /// `ln p(y_i | x_i, w)`.
    pub fn log_likelihood_row(&self, i: usize, w: &[f64]) -> f64 {
        let u: f64 = self.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
        if self.y[i] == 1 {
            log_sigmoid(u)
        } else {
            log_sigmoid(-u)
        }
    }

    pub fn log_joint(&self, w: &[f64]) -> Result<f64> {
        if w.len() != self.dim {
            return invalid(format!("expected {} weights, got {}", self.dim, w.len()));
        }
        Ok(self.log_density(w))
    }
}

impl Target for BlrModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, w: &[f64]) -> f64 {
        let lik: f64 = (0..self.n()).map(|i| self.log_likelihood_row(i, w)).sum();
        let prior: f64 = w.iter().map(|v| -HALF_LN_2PI - 0.5 * v * v).sum();
        lik + prior
    }

    /// Analytic: `sum_i (y_i - sigmoid(x_i . w)) x_i - w`.
    fn grad_log_density(&self, w: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(w) {
            *o = -v;
        }
        for i in 0..self.n() {
            let row = self.row(i);
            let u: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            let r = f64::from(self.y[i]) - sigmoid(u);
            for (o, a) in out.iter_mut().zip(row) {
                *o += r * a;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::central_difference;

    #[test]
    fn zero_weights_single_row() {
        for y in [0, 1] {
            let m = BlrModel::new(vec![vec![2.5]], vec![y]).unwrap();
            let v = m.log_joint(&[0.0]).unwrap();
            assert!((v + 1.612_086).abs() < 1e-6);
        }
    }

    #[test]
    fn saturating_likelihood() {
        let m = BlrModel::new(vec![vec![1.0]], vec![1]).unwrap();
        assert!(m.log_likelihood_row(0, &[800.0]).abs() < 1e-300);
        assert!((m.log_likelihood_row(0, &[-800.0]) + 800.0).abs() < 1e-9);
        assert!(m.log_density(&[-800.0]).is_finite());
    }

    #[test]
    fn three_row_hand_value() {
        // rows (1,0),(0,1),(1,1); labels 1,0,1; w = (0.5,-1)
        // u = 0.5, -1, -0.5
        // ln s(0.5) + ln s(1) + ln s(-0.5) = -0.474077 - 0.313262 - 0.974077
        // prior: 2(-0.918939) - 0.5(0.25 + 1) = -2.462877
        let m = BlrModel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], vec![1, 0, 1]).unwrap();
        let v = m.log_joint(&[0.5, -1.0]).unwrap();
        let expected = -0.474_076_984 - 0.313_261_687 - 0.974_076_984 - 2.462_877_066;
        assert!((v - expected).abs() < 1e-8, "{v} vs {expected}");
    }

    #[test]
    fn analytic_gradient_matches_fd() {
        let m = BlrModel::new(vec![vec![1.0, -0.3], vec![0.2, 1.0], vec![-1.0, 0.7]], vec![1, 0, 1]).unwrap();
        let w = [0.4, -0.9];
        let mut a = [0.0; 2];
        let mut fd = [0.0; 2];
        m.grad_log_density(&w, &mut a);
        central_difference(|x| m.log_density(x), &w, &mut fd);
        for i in 0..2 {
            assert!((a[i] - fd[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_non_binary_labels() {
        assert!(BlrModel::new(vec![vec![1.0]], vec![2]).is_err());
        assert!(BlrModel::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1]).is_err());
    }
}
