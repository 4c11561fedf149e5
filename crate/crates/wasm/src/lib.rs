//! Browser bindings for the cosine-classifier demo.
//!
//! A [`Demo`] holds one fitted pipeline: boundary sample, geodesic index,
//! WEG kernel, explained training points and the GP. The page asks it for
//! ci_width grids, similarity grids around a clicked point, and the point
//! sets to overlay. Grids are row-major with `x2` decreasing down the rows so
//! they can be copied straight into canvas pixels.

use std::cell::RefCell;
use std::sync::Arc;

use gpec::boundary::{sample_boundary, SamplingStrategy, SearchParams};
use gpec::explainers::{derive_seed, kernel_shap, BaselineSpec};
use gpec::geodesic::{build_index, default_k};
use gpec::gp::{fit, GpecModel};
use gpec::models::make_analytic_2d;
use gpec::wegkernel::{normalized_from_features, PointFeatures, WegEvaluator, WegParams};
use gpec::Bounds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

const LOW: [f64; 2] = [1.0, -4.0];
const HIGH: [f64; 2] = [13.0, 4.0];
const BOUNDARY_RESOLUTION: usize = 50;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Cell centres, top row first.
fn grid(resolution: usize) -> Vec<Vec<f64>> {
    let step = |axis: usize, j: usize| LOW[axis] + (HIGH[axis] - LOW[axis]) * (j as f64 + 0.5) / resolution as f64;
    (0..resolution)
        .rev()
        .flat_map(|row| (0..resolution).map(move |col| vec![step(0, col), step(1, row)]))
        .collect()
}

fn flatten(points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

#[wasm_bindgen]
pub struct Demo {
    kernel: Arc<WegEvaluator>,
    gp: GpecModel,
    boundary: Vec<Vec<f64>>,
    train: Vec<Vec<f64>>,
    /// Grid features for the last resolution asked for; clicks reuse them.
    grid_features: RefCell<Option<(usize, Vec<PointFeatures>)>>,
}

#[wasm_bindgen]
impl Demo {
    /// Samples the boundary, explains `train_count` uniform points with
    /// exact KernelSHAP and fits the GP.
    #[wasm_bindgen(constructor)]
    pub fn new(lambda: f64, rho: f64, train_count: usize, seed: u64) -> Result<Demo, JsError> {
        if train_count == 0 {
            return Err(err("need at least one training point"));
        }
        let model = make_analytic_2d("cosine").map_err(err)?;
        let bounds = Bounds::new(LOW.to_vec(), HIGH.to_vec()).map_err(err)?;
        let strategy = SamplingStrategy::Grid {
            bounds,
            resolution: BOUNDARY_RESOLUTION,
        };
        let boundary = sample_boundary(&model, &strategy, SearchParams::default()).map_err(err)?;
        let points = boundary.points.clone();
        let index = build_index(boundary, default_k(points.len())).map_err(err)?;
        let kernel = Arc::new(WegEvaluator::new(Arc::new(index), WegParams { lambda, rho }).map_err(err)?);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
        let train: Vec<Vec<f64>> = (0..train_count)
            .map(|_| (0..2).map(|a| rng.gen_range(LOW[a]..HIGH[a])).collect())
            .collect();
        let mean: Vec<f64> = (0..2)
            .map(|a| train.iter().map(|x| x[a]).sum::<f64>() / train.len() as f64)
            .collect();
        let baseline = BaselineSpec::Reference(mean);
        let records = train
            .iter()
            .enumerate()
            .map(|(i, x)| kernel_shap(&model, x, &baseline, 4, derive_seed(seed, i as u64)))
            .collect::<gpec::Result<Vec<_>>>()
            .map_err(err)?;
        let gp = fit(&records, kernel.clone()).map_err(err)?;
        Ok(Demo {
            kernel,
            gp,
            boundary: points,
            train,
            grid_features: RefCell::new(None),
        })
    }

    /// ci_width of `feature` (0 or 1) on a `resolution` x `resolution` grid.
    pub fn ci_grid(&self, resolution: usize, feature: usize) -> Result<Vec<f64>, JsError> {
        if feature > 1 || resolution == 0 {
            return Err(err("feature must be 0 or 1 and resolution positive"));
        }
        let estimates = self.gp.predict_batch(&grid(resolution)).map_err(err)?;
        Ok(estimates.iter().map(|e| e.ci_width[feature]).collect())
    }

    /// Normalized WEG similarity between `(x1, x2)` and every grid cell.
    pub fn similarity_grid(&self, x1: f64, x2: f64, resolution: usize) -> Vec<f64> {
        let fx = self.kernel.features(&[x1, x2]);
        let mut cache = self.grid_features.borrow_mut();
        if cache.as_ref().map(|(r, _)| *r) != Some(resolution) {
            *cache = Some((resolution, self.kernel.batch_features(&grid(resolution))));
        }
        let (_, features) = cache.as_ref().expect("filled above");
        features.iter().map(|fy| normalized_from_features(&fx, fy)).collect()
    }

    /// Boundary sample as `[x1, x2, x1, x2, ...]`.
    pub fn boundary_points(&self) -> Vec<f64> {
        flatten(&self.boundary)
    }

    pub fn train_points(&self) -> Vec<f64> {
        flatten(&self.train)
    }

    pub fn jitter(&self) -> f64 {
        self.gp.jitter
    }

    /// `[x1_low, x2_low, x1_high, x2_high]`.
    pub fn domain() -> Vec<f64> {
        vec![LOW[0], LOW[1], HIGH[0], HIGH[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_runs_top_row_first() {
        let g = grid(2);
        assert_eq!(g[0], vec![4.0, 2.0]);
        assert_eq!(g[1], vec![10.0, 2.0]);
        assert_eq!(g[2], vec![4.0, -2.0]);
    }

    #[test]
    fn demo_fits_and_fills_grids() {
        let demo = Demo::new(1.0, 0.1, 20, 1).unwrap();
        let ci = demo.ci_grid(10, 0).unwrap();
        assert_eq!(ci.len(), 100);
        assert!(ci.iter().all(|v| v.is_finite() && *v >= 0.0));
        let sim = demo.similarity_grid(5.0, 2.0 * 2f64.cos(), 10);
        assert!(sim.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        assert_eq!(demo.boundary_points().len() % 2, 0);
        assert_eq!(demo.train_points().len(), 40);
    }
}
