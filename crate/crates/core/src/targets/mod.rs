//! Unnormalized target densities, the built-in models and evaluation metrics.

mod blr;
mod data;
mod gmm;
pub mod metrics;

pub use blr::BlrModel;
pub use data::{load_csv, synthetic_logistic, Dataset, SyntheticLogistic};
pub use gmm::GaussianMixtureTarget;

/// An unnormalized log-density `ln p~(z) = ln p(z, X)`.
///
/// Only values are required. The gradient defaults to central differences
/// with per-coordinate step `1e-4 (1 + |z_i|)`; models with a cheap analytic
/// gradient may override it.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, z: &[f64]) -> f64;

    /// Known log-normalizer `ln p(X)`, when available (synthetic targets).
    fn log_normalizer(&self) -> Option<f64> {
        None
    }

    fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        central_difference(|x| self.log_density(x), z, out);
    }
}

/// Central-difference gradient with step `1e-4 (1 + |z_i|)`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, z: &[f64], out: &mut [f64]) {
    let mut x = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-4 * (1.0 + z[i].abs());
        x[i] = z[i] + h;
        let up = f(&x);
        x[i] = z[i] - h;
        let down = f(&x);
        x[i] = z[i];
        out[i] = (up - down) / (2.0 * h);
    }
}

impl<T: Target + ?Sized> Target for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        (**self).log_density(z)
    }
    fn log_normalizer(&self) -> Option<f64> {
        (**self).log_normalizer()
    }
    fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        (**self).grad_log_density(z, out)
    }
}

impl<T: Target + ?Sized> Target for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        (**self).log_density(z)
    }
    fn log_normalizer(&self) -> Option<f64> {
        (**self).log_normalizer()
    }
    fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        (**self).grad_log_density(z, out)
    }
}

/// A target whose log-density is offset by a constant.
#[derive(Debug, Clone)]
pub struct Shifted<T> {
    pub inner: T,
    pub shift: f64,
}

impl<T: Target> Target for Shifted<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        self.inner.log_density(z) + self.shift
    }
    fn log_normalizer(&self) -> Option<f64> {
        self.inner.log_normalizer().map(|c| c + self.shift)
    }
    fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        self.inner.grad_log_density(z, out)
    }
}

/// Target backed by a closure; useful for tests and custom models.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
    log_normalizer: Option<f64>,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f, log_normalizer: None }
    }

    pub fn with_log_normalizer(mut self, c: f64) -> Self {
        self.log_normalizer = Some(c);
        self
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Target for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }
    fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }
}
