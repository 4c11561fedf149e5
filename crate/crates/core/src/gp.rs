//! Independent per-feature Gaussian processes over explanations, with fixed
//! heteroscedastic label noise.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GpecError, Result};
use crate::explainers::ExplanationRecord;
use crate::linalg::factorize_with_jitter;
use crate::parallel::map_indexed;
use crate::wegkernel::CovarianceKernel;

/// Gaussian 97.5th percentile; `ci_width = 2 * CI_Z * std`.
pub const CI_Z: f64 = 1.959964;

/// Negative predictive variances down to this value are treated as round-off.
pub const VARIANCE_CLAMP: f64 = -1e-10;

/// One Cholesky factor shared by every output whose noise column matches.
#[derive(Clone, Debug)]
struct OutputGroup {
    outputs: Vec<usize>,
    noise: Vec<f64>,
    factor: Cholesky<f64, Dyn>,
}

/// A fitted GP. Immutable after [`fit`]; prediction is read-only.
#[derive(Clone)]
pub struct GpecModel {
    pub train_x: Vec<Vec<f64>>,
    /// `n x d`, one column per output.
    pub train_e: DMatrix<f64>,
    /// `n x d` label-noise variances.
    pub noise: DMatrix<f64>,
    pub kernel: Arc<dyn CovarianceKernel>,
    /// Noiseless `K(X, X)`.
    pub gram: DMatrix<f64>,
    pub jitter: f64,
    groups: Vec<OutputGroup>,
    /// `(K + Sigma_j + jitter I)^-1 e_j` per output.
    alphas: Vec<DVector<f64>>,
    /// Index into `groups` for each output.
    group_of: Vec<usize>,
}

impl std::fmt::Debug for GpecModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpecModel")
            .field("n", &self.train_x.len())
            .field("outputs", &self.train_e.ncols())
            .field("kernel", &self.kernel.describe())
            .field("jitter", &self.jitter)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyEstimate {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci_width: Vec<f64>,
}

/// Fits one GP per attribution feature with zero prior mean.
///
/// The jitter is chosen on the noiseless Gram matrix and reused for every
/// output, so adding label noise can only raise predictive variance.
pub fn fit(train: &[ExplanationRecord], kernel: Arc<dyn CovarianceKernel>) -> Result<GpecModel> {
    let first = train
        .first()
        .ok_or_else(|| GpecError::Parameter("fit needs at least one training explanation".into()))?;
    let d = first.x.len();
    let s = first.e.len();
    for r in train {
        r.validate()?;
        if r.x.len() != d || r.e.len() != s {
            return Err(GpecError::Parameter(
                "training explanations have mixed dimensions".into(),
            ));
        }
    }
    let n = train.len();
    let train_x: Vec<Vec<f64>> = train.iter().map(|r| r.x.clone()).collect();
    let train_e = DMatrix::from_fn(n, s, |i, j| train[i].e[j]);
    let noise = DMatrix::from_fn(n, s, |i, j| train[i].noise_var[j]);
    let gram = kernel.cross(&train_x, &train_x);
    let (base_factor, jitter) = factorize_with_jitter(&gram)?;

    let mut groups: Vec<OutputGroup> = Vec::new();
    let mut group_of = Vec::with_capacity(s);
    for j in 0..s {
        let column: Vec<f64> = noise.column(j).iter().copied().collect();
        if let Some(g) = groups.iter().position(|g| g.noise == column) {
            groups[g].outputs.push(j);
            group_of.push(g);
            continue;
        }
        let factor = if column.iter().all(|v| *v == 0.0) {
            base_factor.clone()
        } else {
            let mut m = gram.clone();
            for i in 0..n {
                m[(i, i)] += jitter + column[i];
            }
            // K + jitter I is positive definite, so adding a non-negative diagonal keeps it so
            Cholesky::new(m).ok_or(GpecError::NonPsdKernel { jitter })?
        };
        group_of.push(groups.len());
        groups.push(OutputGroup {
            outputs: vec![j],
            noise: column,
            factor,
        });
    }
    let alphas = (0..s)
        .map(|j| groups[group_of[j]].factor.solve(&train_e.column(j).into_owned()))
        .collect();
    Ok(GpecModel {
        train_x,
        train_e,
        noise,
        kernel,
        gram,
        jitter,
        groups,
        alphas,
        group_of,
    })
}

impl GpecModel {
    pub fn num_train(&self) -> usize {
        self.train_x.len()
    }

    pub fn input_dim(&self) -> usize {
        self.train_x[0].len()
    }

    pub fn num_outputs(&self) -> usize {
        self.train_e.ncols()
    }

    /// Number of distinct factorizations held (one per distinct noise column).
    pub fn num_factors(&self) -> usize {
        self.groups.len()
    }

    /// `K + diag(noise_j) + jitter I` for output `j`.
    pub fn covariance(&self, output: usize) -> DMatrix<f64> {
        let mut m = self.gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.jitter + self.noise[(i, output)];
        }
        m
    }

    /// Lower-triangular factor for output `j`.
    pub fn factor(&self, output: usize) -> DMatrix<f64> {
        self.groups[self.group_of[output]].factor.l()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(GpecError::Parameter(format!(
                "test point has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GpecError::Parameter("test point is not finite".into()));
        }
        Ok(())
    }

    fn posterior(&self, x: &[f64], k_star: DVector<f64>) -> Result<UncertaintyEstimate> {
        let prior = self.kernel.prior_variance(x);
        let s = self.num_outputs();
        let mean = (0..s).map(|j| k_star.dot(&self.alphas[j])).collect();
        let mut explained = vec![0.0; self.groups.len()];
        for (g, group) in self.groups.iter().enumerate() {
            let mut v = k_star.clone();
            group.factor.l_dirty().solve_lower_triangular_mut(&mut v);
            explained[g] = v.norm_squared();
        }
        let mut variance = Vec::with_capacity(s);
        for j in 0..s {
            let var = prior - explained[self.group_of[j]];
            if var < VARIANCE_CLAMP || var.is_nan() {
                return Err(GpecError::Numerical(format!(
                    "predictive variance {var:e} for output {j} is negative beyond round-off"
                )));
            }
            variance.push(var.max(0.0));
        }
        let ci_width = variance.iter().map(|v| 2.0 * CI_Z * v.sqrt()).collect();
        Ok(UncertaintyEstimate {
            mean,
            variance,
            ci_width,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<UncertaintyEstimate> {
        self.check_input(x)?;
        let row = self.kernel.cross(std::slice::from_ref(&x.to_vec()), &self.train_x);
        self.posterior(x, row.row(0).transpose())
    }

    /// Elementwise [`predict`](Self::predict); each result depends only on its own input.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<UncertaintyEstimate>> {
        for x in xs {
            self.check_input(x)?;
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let cross = self.kernel.cross(xs, &self.train_x);
        map_indexed(xs.len(), |i| self.posterior(&xs[i], cross.row(i).transpose()))
            .into_iter()
            .collect()
    }
}

/// Columns `x_1..x_d,mean_1..mean_s,ci_1..ci_s`.
pub fn write_uncertainty_csv<W: Write>(xs: &[Vec<f64>], estimates: &[UncertaintyEstimate], writer: W) -> Result<()> {
    if xs.len() != estimates.len() {
        return Err(GpecError::Parameter("points and estimates differ in length".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let d = xs.first().map_or(0, Vec::len);
    let s = estimates.first().map_or(0, |e| e.mean.len());
    let header: Vec<String> = (1..=d)
        .map(|i| format!("x_{i}"))
        .chain((1..=s).map(|i| format!("mean_{i}")))
        .chain((1..=s).map(|i| format!("ci_{i}")))
        .collect();
    w.write_record(&header)?;
    for (x, est) in xs.iter().zip(estimates) {
        let row: Vec<String> = x
            .iter()
            .chain(&est.mean)
            .chain(&est.ci_width)
            .map(f64::to_string)
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
