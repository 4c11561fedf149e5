use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{sigmoid, BlackBoxModel};
use crate::bounds::Bounds;
use crate::error::{GpecError, Result};

/// `|x_1|` below this is outside the cosine classifier's domain (10/x_1 blows up).
pub const COSINE_EXCLUSION: f64 = 1e-3;

/// Registered closed-form 2-D classifiers. Each predicts `sigmoid(f(x))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticExpr {
    /// `f = 2 cos(10 / x_1) - x_2`, oscillating faster as `x_1` shrinks.
    Cosine,
    /// `f = x_1 - 1/2`, a straight vertical boundary.
    Linear,
    /// `f = 1 - x_1^2 - x_2^2`, the unit circle.
    Circle,
}

impl FromStr for AnalyticExpr {
    type Err = GpecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Self::Cosine),
            "linear" => Ok(Self::Linear),
            "circle" => Ok(Self::Circle),
            other => Err(GpecError::Config(format!(
                "unknown analytic classifier '{other}' (expected cosine, linear or circle)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalyticModel {
    expr: AnalyticExpr,
}

pub fn make_analytic_2d(expr_id: &str) -> Result<AnalyticModel> {
    Ok(AnalyticModel { expr: expr_id.parse()? })
}

impl AnalyticModel {
    pub fn new(expr: AnalyticExpr) -> Self {
        Self { expr }
    }

    pub fn expr(&self) -> AnalyticExpr {
        self.expr
    }

    /// The signed score `f`; the boundary is `f = 0`.
    pub fn score(&self, x: &[f64]) -> f64 {
        match self.expr {
            AnalyticExpr::Cosine => 2.0 * (10.0 / x[0]).cos() - x[1],
            AnalyticExpr::Linear => x[0] - 0.5,
            AnalyticExpr::Circle => 1.0 - x[0] * x[0] - x[1] * x[1],
        }
    }

    fn score_gradient(&self, x: &[f64]) -> [f64; 2] {
        match self.expr {
            AnalyticExpr::Cosine => {
                let u = 10.0 / x[0];
                [2.0 * u.sin() * 10.0 / (x[0] * x[0]), -1.0]
            }
            AnalyticExpr::Linear => [1.0, 0.0],
            AnalyticExpr::Circle => [-2.0 * x[0], -2.0 * x[1]],
        }
    }
}

impl BlackBoxModel for AnalyticModel {
    fn dim(&self) -> usize {
        2
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p = self.predict(x);
        let scale = p * (1.0 - p);
        Some(self.score_gradient(x).iter().map(|g| g * scale).collect())
    }

    fn label(&self) -> String {
        match self.expr {
            AnalyticExpr::Cosine => "cosine: 2cos(10/x1) - x2".into(),
            AnalyticExpr::Linear => "linear: x1 - 0.5".into(),
            AnalyticExpr::Circle => "circle: 1 - |x|^2".into(),
        }
    }

    fn check_domain(&self, bounds: &Bounds) -> Result<()> {
        if bounds.dim() != 2 {
            return Err(GpecError::Config(format!(
                "analytic classifiers are 2-D, box has {} axes",
                bounds.dim()
            )));
        }
        if self.expr == AnalyticExpr::Cosine && bounds.low[0] < COSINE_EXCLUSION && bounds.high[0] > -COSINE_EXCLUSION {
            return Err(GpecError::Config(format!(
                "cosine classifier is undefined for |x1| < {COSINE_EXCLUSION}; box spans [{}, {}]",
                bounds.low[0], bounds.high[0]
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::finite_difference_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn cosine_zero_is_half() {
        let m = make_analytic_2d("cosine").unwrap();
        let x1 = 20.0 / PI; // 10/x1 = pi/2
        assert!((m.predict(&[x1, 0.0]) - 0.5).abs() < 1e-15);
        assert!(m.predict(&[x1, 1e3]) < 1e-300);
    }

    #[test]
    fn cosine_boundary_curve() {
        let m = make_analytic_2d("cosine").unwrap();
        for x1 in [4.0, 5.0, 7.5, 11.0] {
            let x2 = 2.0 * (10.0f64 / x1).cos();
            assert!((m.predict(&[x1, x2]) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn unknown_expr_is_config_error() {
        assert!(matches!(make_analytic_2d("sine"), Err(GpecError::Config(_))));
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let m = make_analytic_2d("cosine").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x1 = rng.gen_range(2.0..12.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let x = [x1, rng.gen_range(-2.5..2.5)];
            let g = m.gradient(&x).unwrap();
            let fd = finite_difference_gradient(&m, &x, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                let scale = a.abs().max(1e-3);
                assert!((a - b).abs() / scale <= 1e-6, "x={x:?} analytic={a} fd={b}");
            }
        }
    }

    #[test]
    fn cosine_domain_excludes_singularity() {
        let m = make_analytic_2d("cosine").unwrap();
        let bad = Bounds::new(vec![-1.0, -4.0], vec![12.0, 4.0]).unwrap();
        let good = Bounds::new(vec![4.0, -4.0], vec![12.0, 4.0]).unwrap();
        assert!(m.check_domain(&bad).is_err());
        assert!(m.check_domain(&good).is_ok());
    }
}
