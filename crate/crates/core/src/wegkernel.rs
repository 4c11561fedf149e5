//! Weighted exponential geodesic (WEG) kernel.
//!
//! Each input `x` induces a distribution over the boundary sample that
//! favours nearby boundary points, `q(m_i | x) ∝ exp(-rho |x - m_i|^2)`.
//! The raw kernel is the expected EG similarity between boundary points
//! drawn from `q(.|x)` and `q(.|y)`:
//!
//! ```text
//! k(x, y) = sum_i sum_j q_i(x) q_j(y) exp(-lambda d_geo(m_i, m_j))
//! ```
//!
//! The boundary sample itself plays the role of the Monte Carlo draws, and
//! the normalising constants are handled in log space. The normalised kernel
//! divides by `sqrt(k(x, x) k(y, y))` so that it has a unit diagonal.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::squared_distance;
use crate::error::{GpecError, Result};
use crate::geodesic::{eg_kernel, EgGram, GeodesicIndex};
use crate::linalg::{dot, factorize_with_jitter};
use crate::parallel::map_indexed;

pub const DEFAULT_RHO: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WegParams {
    pub lambda: f64,
    pub rho: f64,
}

impl Default for WegParams {
    fn default() -> Self {
        Self {
            lambda: crate::geodesic::DEFAULT_LAMBDA,
            rho: DEFAULT_RHO,
        }
    }
}

impl WegParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(GpecError::Parameter(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(GpecError::Parameter(format!("rho must be >= 0, got {}", self.rho)));
        }
        Ok(())
    }
}

/// A positive semi-definite covariance function usable by the GP.
pub trait CovarianceKernel: Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    /// `k(x, x)`.
    fn prior_variance(&self, x: &[f64]) -> f64 {
        self.eval(x, x)
    }

    /// Dense `rows x cols` matrix of kernel values.
    fn cross(&self, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> DMatrix<f64> {
        let values = map_indexed(rows.len(), |i| {
            cols.iter().map(|c| self.eval(&rows[i], c)).collect::<Vec<_>>()
        });
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| values[i][j])
    }

    fn describe(&self) -> String;
}

/// Precomputed per-point quantities: boundary weights `w`, the EG-smoothed
/// weights `u = E w`, and the raw self-similarity `w . u`.
#[derive(Clone, Debug)]
pub struct PointFeatures {
    pub weights: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub self_similarity: f64,
}

#[derive(Debug)]
pub struct WegEvaluator {
    pub index: Arc<GeodesicIndex>,
    pub eg: EgGram,
    pub params: WegParams,
}

impl WegEvaluator {
    pub fn new(index: Arc<GeodesicIndex>, params: WegParams) -> Result<Self> {
        params.validate()?;
        let eg = eg_kernel(&index, params.lambda)?;
        Ok(Self { index, eg, params })
    }

    pub fn boundary_len(&self) -> usize {
        self.index.len()
    }

    /// Normalised boundary weights for `x`, computed with max-subtraction so
    /// that far-away inputs never underflow to an all-zero vector.
    pub fn weights(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self
            .index
            .points()
            .iter()
            .map(|m| -self.params.rho * squared_distance(x, m))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }

    pub fn features(&self, x: &[f64]) -> PointFeatures {
        let weights = self.weights(x);
        let e = &self.eg.matrix;
        let m = weights.len();
        let active: Vec<usize> = (0..m).filter(|&j| weights[j] != 0.0).collect();
        // E is symmetric, so column i doubles as row i (contiguous in column-major storage).
        let smoothed: Vec<f64> = (0..m)
            .map(|i| {
                let col = e.column(i);
                active.iter().map(|&j| col[j] * weights[j]).sum()
            })
            .collect();
        let self_similarity = dot(&weights, &smoothed);
        PointFeatures {
            weights,
            smoothed,
            self_similarity,
        }
    }

    pub fn batch_features(&self, xs: &[Vec<f64>]) -> Vec<PointFeatures> {
        map_indexed(xs.len(), |i| self.features(&xs[i]))
    }

    /// Raw (unnormalised) kernel. Symmetric bit-for-bit in its arguments.
    pub fn weg_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        raw_from_features(&self.features(x), &self.features(y))
    }

    pub fn weg_normalized(&self, x: &[f64], y: &[f64]) -> f64 {
        if x == y {
            return 1.0;
        }
        normalized_from_features(&self.features(x), &self.features(y))
    }
}

/// `(w_x . u_y + w_y . u_x) / 2`: both terms equal `w_x^T E w_y` in exact
/// arithmetic; averaging them makes the floating-point value symmetric.
pub fn raw_from_features(fx: &PointFeatures, fy: &PointFeatures) -> f64 {
    let a = dot(&fx.weights, &fy.smoothed);
    let b = dot(&fy.weights, &fx.smoothed);
    0.5 * (a + b)
}

pub fn normalized_from_features(fx: &PointFeatures, fy: &PointFeatures) -> f64 {
    raw_from_features(fx, fy) / (fx.self_similarity * fy.self_similarity).sqrt()
}

impl CovarianceKernel for WegEvaluator {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.weg_normalized(x, y)
    }

    fn prior_variance(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn cross(&self, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> DMatrix<f64> {
        let col_features = self.batch_features(cols);
        let values = map_indexed(rows.len(), |i| {
            let fr = self.features(&rows[i]);
            cols.iter()
                .zip(&col_features)
                .map(|(c, fc)| {
                    if rows[i] == *c {
                        1.0
                    } else {
                        normalized_from_features(&fr, fc)
                    }
                })
                .collect::<Vec<_>>()
        });
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| values[i][j])
    }

    fn describe(&self) -> String {
        format!(
            "weg(lambda={}, rho={}, boundary={})",
            self.params.lambda,
            self.params.rho,
            self.index.len()
        )
    }
}

/// `exp(-lambda |x - y|^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], lambda: f64) -> f64 {
    (-lambda * squared_distance(x, y)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub lambda: f64,
}

impl RbfKernel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(GpecError::Parameter(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }
}

impl CovarianceKernel for RbfKernel {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        rbf_kernel(x, y, self.lambda)
    }

    fn prior_variance(&self, _x: &[f64]) -> f64 {
        1.0
    }

    fn describe(&self) -> String {
        format!("rbf(lambda={})", self.lambda)
    }
}

/// Kernel values between point lists; for square Gram matrices the
/// jitter added to make the matrix factorizable is recorded.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub jitter: f64,
}

impl KernelMatrix {
    /// Values with the recorded jitter on the diagonal.
    pub fn jittered(&self) -> DMatrix<f64> {
        let mut m = self.values.clone();
        for i in 0..m.nrows().min(m.ncols()) {
            m[(i, i)] += self.jitter;
        }
        m
    }
}

/// Gram matrix between two point lists. When both lists are the same, the
/// smallest ladder jitter that makes the matrix factorizable is recorded.
pub fn gram(points_a: &[Vec<f64>], points_b: &[Vec<f64>], kernel: &dyn CovarianceKernel) -> Result<KernelMatrix> {
    if points_a.is_empty() || points_b.is_empty() {
        return Err(GpecError::Parameter("gram needs non-empty point lists".into()));
    }
    let values = kernel.cross(points_a, points_b);
    if points_a != points_b {
        return Ok(KernelMatrix { values, jitter: 0.0 });
    }
    let (_, jitter) = factorize_with_jitter(&values)?;
    Ok(KernelMatrix { values, jitter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySet;
    use crate::geodesic::build_index;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_atom(rho: f64) -> WegEvaluator {
        let b = BoundarySet::from_points(vec![vec![0.0, 0.0], vec![1.0, 0.0]], "two").unwrap();
        let idx = GeodesicIndex::from_distances(b, 1, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        WegEvaluator::new(Arc::new(idx), WegParams { lambda: 1.0, rho }).unwrap()
    }

    fn arc_evaluator(params: WegParams) -> WegEvaluator {
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = 3.0 * i as f64 / 59.0;
                vec![t.cos() * 2.0, t.sin() * 2.0]
            })
            .collect();
        let idx = build_index(BoundarySet::from_points(pts, "arc").unwrap(), 6).unwrap();
        WegEvaluator::new(Arc::new(idx), params).unwrap()
    }

    #[test]
    fn zero_rho_gives_uniform_weights() {
        let w = two_atom(0.0).weights(&[5.0, 3.0]);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn equidistant_weights() {
        let w = two_atom(1.0).weights(&[0.5, 2.0]);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn two_term_softmax() {
        let w = two_atom(1.0).weights(&[0.0, 0.0]);
        let e = (-1.0f64).exp();
        assert!((w[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((w[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((w[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn far_points_do_not_underflow() {
        let w = two_atom(1e3).weights(&[1e4, 0.0]);
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(w[1], 1.0);
    }

    #[test]
    fn single_atom_raw_is_one() {
        let b = BoundarySet::from_points(vec![vec![0.3, 0.3]], "one").unwrap();
        let idx = GeodesicIndex::from_distances(b, 1, DMatrix::zeros(1, 1)).unwrap();
        let ev = WegEvaluator::new(Arc::new(idx), WegParams::default()).unwrap();
        assert_eq!(ev.weg_raw(&[1.0, 2.0], &[-4.0, 0.0]), 1.0);
    }

    #[test]
    fn four_term_sum() {
        // x equidistant from both atoms -> weights (1/2, 1/2)
        let ev = two_atom(1.0);
        let x = [0.5, 1.0];
        let expected = 0.25 + 0.5 * (-1.0f64).exp() + 0.25;
        assert!((ev.weg_raw(&x, &x) - expected).abs() < 1e-15);
        assert!((expected - 0.683_939_720_585_721_2).abs() < 1e-15);
    }

    #[test]
    fn normalized_identity_and_symmetry() {
        let ev = arc_evaluator(WegParams { lambda: 1.0, rho: 0.7 });
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let y = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            assert_eq!(ev.weg_normalized(&x, &x), 1.0);
            let kxy = ev.weg_normalized(&x, &y);
            assert_eq!(kxy, ev.weg_normalized(&y, &x));
            assert_eq!(ev.weg_raw(&x, &y), ev.weg_raw(&y, &x));
            assert!((0.0..=1.0 + 1e-12).contains(&kxy));
        }
    }

    #[test]
    fn zero_rho_collapses_to_constant() {
        let ev = arc_evaluator(WegParams { lambda: 1.0, rho: 0.0 });
        let a = ev.weg_raw(&[0.0, 0.0], &[1.0, 1.0]);
        let b = ev.weg_raw(&[-2.0, 5.0], &[3.0, -1.0]);
        assert!((a - b).abs() < 1e-14);
        assert!((ev.weg_normalized(&[0.0, 0.0], &[9.0, 9.0]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn concentration_recovers_eg_entries() {
        let ev = arc_evaluator(WegParams { lambda: 1.0, rho: 1e6 });
        let pts = ev.index.points().to_vec();
        for (i, j) in [(0, 59), (3, 17), (20, 21), (44, 44)] {
            let raw = ev.weg_raw(&pts[i], &pts[j]);
            assert!((raw - ev.eg.matrix[(i, j)]).abs() <= 1e-6);
        }
    }

    #[test]
    fn rbf_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 1.0), 1.0);
        assert!((rbf_kernel(&[0.0, 0.0], &[1.0, 0.0], 1.0) - (-1.0f64).exp()).abs() < 1e-16);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn gram_properties() {
        let ev = arc_evaluator(WegParams { lambda: 1.0, rho: 0.5 });
        let one = gram(&[vec![0.1, 0.2]], &[vec![0.1, 0.2]], &ev).unwrap();
        assert_eq!(one.values, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(one.jitter, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..5)
            .map(|_| vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
            .collect();
        let g = gram(&pts, &pts, &ev).unwrap();
        for i in 0..5 {
            assert_eq!(g.values[(i, i)], 1.0);
            for j in 0..5 {
                assert!((g.values[(i, j)] - g.values[(j, i)]).abs() <= 1e-12);
                assert_eq!(g.values[(i, j)], ev.weg_normalized(&pts[i], &pts[j]));
            }
        }
    }

    #[test]
    fn empty_gram_rejected() {
        assert!(gram(&[], &[vec![0.0]], &RbfKernel::new(1.0).unwrap()).is_err());
    }
}
