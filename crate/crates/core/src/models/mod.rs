//! Black-box classifiers.
//!
//! Every binary model exposes the probability of the positive class; the
//! decision boundary is the level set `predict(x) = 1/2`.

mod analytic;
mod mlp;
mod multiclass;
mod tree;

pub use analytic::{make_analytic_2d, AnalyticExpr, AnalyticModel};
pub use mlp::{Activation, DenseLayer, MlpModel};
pub use multiclass::{one_vs_all, MulticlassModel, OneVsAll};
pub use tree::{TreeEnsembleModel, TreeNode};

use crate::bounds::Bounds;
use crate::error::Result;

/// A probability-valued classifier over R^d.
pub trait BlackBoxModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Probability of the positive class, in `[0, 1]`.
    fn predict(&self, x: &[f64]) -> f64;

    /// Gradient of `predict`, when the model is differentiable.
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn label(&self) -> String;

    /// Rejects boxes that intersect a region where the model is undefined.
    fn check_domain(&self, _bounds: &Bounds) -> Result<()> {
        Ok(())
    }
}

impl<T: BlackBoxModel + ?Sized> BlackBoxModel for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).gradient(x)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn check_domain(&self, bounds: &Bounds) -> Result<()> {
        (**self).check_domain(bounds)
    }
}

impl<T: BlackBoxModel + ?Sized> BlackBoxModel for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        (**self).gradient(x)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn check_domain(&self, bounds: &Bounds) -> Result<()> {
        (**self).check_domain(bounds)
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A model whose probability is `sigmoid(score(x))`, wrapping any score function.
///
/// Handy for tests and for quick experiments with hand-written logits.
pub struct LogitModel<F> {
    dim: usize,
    score: F,
    label: String,
}

impl<F> LogitModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, label: impl Into<String>, score: F) -> Self {
        Self {
            dim,
            score,
            label: label.into(),
        }
    }
}

impl<F> BlackBoxModel for LogitModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid((self.score)(x))
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Central finite-difference gradient of `predict`.
pub fn finite_difference_gradient(model: &dyn BlackBoxModel, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = model.predict(&probe);
            probe[i] = x[i] - step;
            let down = model.predict(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
    }
}
