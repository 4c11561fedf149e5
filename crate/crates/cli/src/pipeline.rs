//! Stages shared by every experiment: model, training points, boundary,
//! kernel, explanations, GP fit and grid evaluation.

use std::path::Path;
use std::sync::Arc;

use gpec::boundary::{sample_boundary, AttackParams, BoundarySet, SamplingStrategy, SearchParams};
use gpec::explainers::{
    derive_seed, estimate_tau, external_variance, read_explanations_csv, AttributionExplainer, BaselineSpec, Explainer,
    ExplanationRecord, Method,
};
use gpec::geodesic::{build_index, default_k, GeodesicIndex};
use gpec::gp::{fit, GpecModel, UncertaintyEstimate};
use gpec::models::{
    make_analytic_2d, one_vs_all, Activation, BlackBoxModel, MlpModel, MulticlassModel, TreeEnsembleModel,
};
use gpec::wegkernel::{CovarianceKernel, RbfKernel, WegEvaluator, WegParams};
use gpec::{Bounds, GpecError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{
    BoundaryStrategy, ExplainerConfig, ExplainerKind, KernelConfig, KernelKind, ModelConfig, RunConfig, TrainSource,
};
use crate::error::{CliError, Stage, StageExt};

/// Stream indices mixed into the run seed, one per random stage.
pub const SEED_TRAIN: u64 = 1;
pub const SEED_BOUNDARY: u64 = 2;
pub const SEED_EXPLAIN: u64 = 3;
pub const SEED_TAU: u64 = 4;
pub const SEED_TEST: u64 = 5;

/// Class index of an input, for attack sampling.
pub type Labeler = Arc<dyn Fn(&[f64]) -> usize + Send + Sync>;

/// A binary view of the configured classifier plus the labels used for attacks.
pub struct Classifier {
    pub binary: Arc<dyn BlackBoxModel>,
    labeler: Labeler,
    pub num_classes: usize,
    pub target_class: usize,
}

impl Classifier {
    pub fn label(&self, x: &[f64]) -> usize {
        (self.labeler)(x)
    }

    pub fn from_binary(model: Arc<dyn BlackBoxModel>) -> Self {
        let m = model.clone();
        // class 0 is the positive side
        Self {
            binary: model,
            labeler: Arc::new(move |x| usize::from(m.predict(x) < 0.5)),
            num_classes: 2,
            target_class: 0,
        }
    }

    pub fn from_mlp(mlp: MlpModel, class: Option<usize>) -> Result<Self, CliError> {
        if mlp.output_dim() == 1 {
            if class.is_some_and(|c| c != 0) {
                return Err(CliError::config("model.class must be 0 for a single-output network"));
            }
            return Ok(Self::from_binary(Arc::new(mlp)));
        }
        let target = class.unwrap_or(0);
        let shared = Arc::new(mlp);
        let ova = one_vs_all(SharedMlp(shared.clone()), target).stage(Stage::Model)?;
        Ok(Self {
            binary: Arc::new(ova),
            num_classes: shared.output_dim(),
            labeler: Arc::new(move |x| shared.argmax(x)),
            target_class: target,
        })
    }
}

/// Shared handle so the one-vs-all view and the labeler use one network.
struct SharedMlp(Arc<MlpModel>);

impl MulticlassModel for SharedMlp {
    fn dim(&self) -> usize {
        self.0.input_dim()
    }
    fn num_classes(&self) -> usize {
        self.0.output_dim()
    }
    fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        self.0.logits(x)
    }
    fn logit_vjp(&self, x: &[f64], seed: &[f64]) -> Option<Vec<f64>> {
        Some(self.0.vjp(x, seed))
    }
    fn label(&self) -> String {
        MulticlassModel::label(&*self.0)
    }
}

pub fn load_mlp(path: &Path, softplus_beta: Option<f64>) -> Result<MlpModel, CliError> {
    MlpModel::load(path, softplus_beta.map(Activation::Softplus)).stage(Stage::Model)
}

pub fn load_classifier(config: &ModelConfig) -> Result<Classifier, CliError> {
    match config {
        ModelConfig::Analytic { expr } => {
            let m = make_analytic_2d(expr).map_err(|e| CliError::config(e.to_string()))?;
            Ok(Classifier::from_binary(Arc::new(m)))
        }
        ModelConfig::Mlp {
            path,
            softplus_beta,
            class,
        } => Classifier::from_mlp(load_mlp(path, *softplus_beta)?, *class),
        ModelConfig::Tree { path, dim } => {
            let t = TreeEnsembleModel::load(path, *dim).stage(Stage::Model)?;
            Ok(Classifier::from_binary(Arc::new(t)))
        }
    }
}

/// Headered numeric CSV; the first `dim` columns of each row.
pub fn read_points_csv(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let load_err = |reason: String| {
        CliError::at(
            Stage::Config,
            GpecError::Load {
                what: path.display().to_string(),
                reason,
            },
        )
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| load_err(e.to_string()))?;
    let mut points = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| load_err(e.to_string()))?;
        if row.len() < dim {
            return Err(load_err(format!(
                "row {} has {} columns, need {dim}",
                line + 1,
                row.len()
            )));
        }
        let x: Vec<f64> = row
            .iter()
            .take(dim)
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| load_err(format!("row {}: {e}", line + 1)))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(load_err(format!("row {} is not finite", line + 1)));
        }
        points.push(x);
    }
    Ok(points)
}

pub fn uniform_points(bounds: &Bounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            bounds
                .low
                .iter()
                .zip(&bounds.high)
                .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
                .collect()
        })
        .collect()
}

/// Training inputs, or fully formed explanations when the config supplies them.
pub enum TrainingData {
    Points(Vec<Vec<f64>>),
    Explanations(Vec<ExplanationRecord>),
}

impl TrainingData {
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            TrainingData::Points(p) => p.clone(),
            TrainingData::Explanations(r) => r.iter().map(|r| r.x.clone()).collect(),
        }
    }
}

pub fn training_data(config: &RunConfig) -> Result<TrainingData, CliError> {
    let d = config.boundary.low.len();
    let data = match config.train.source {
        TrainSource::Uniform => TrainingData::Points(uniform_points(
            &config.boundary_bounds()?,
            config.train.count,
            derive_seed(config.seed, SEED_TRAIN),
        )),
        TrainSource::Points => TrainingData::Points(read_points_csv(config.train.path.as_ref().unwrap(), d)?),
        TrainSource::Explanations => {
            let path = config.train.path.as_ref().unwrap();
            let file = std::fs::File::open(path)?;
            let records = read_explanations_csv(file).stage(Stage::Config)?;
            if records.iter().any(|r| r.x.len() != d) {
                return Err(CliError::config(format!(
                    "{} does not have {d} features",
                    path.display()
                )));
            }
            TrainingData::Explanations(records)
        }
    };
    if data.points().is_empty() {
        return Err(CliError::config("the training set is empty"));
    }
    Ok(data)
}

pub fn boundary(config: &RunConfig, classifier: &Classifier, train: &[Vec<f64>]) -> Result<BoundarySet, CliError> {
    let b = &config.boundary;
    let params = SearchParams {
        tol: b.tol,
        max_iter: b.max_iter,
        ..SearchParams::default()
    };
    let model = classifier.binary.as_ref();
    let set = match b.strategy {
        BoundaryStrategy::Csv => {
            let path = b.path.as_ref().unwrap();
            let file = std::fs::File::open(path)?;
            BoundarySet::read_csv(file, path.display().to_string()).stage(Stage::Boundary)?
        }
        BoundaryStrategy::Grid => {
            let strategy = SamplingStrategy::Grid {
                bounds: config.boundary_bounds()?,
                resolution: b.resolution,
            };
            sample_boundary(model, &strategy, params).stage(Stage::Boundary)?
        }
        BoundaryStrategy::Attack => {
            let counts = b.counts.clone().unwrap();
            if counts.len() != classifier.num_classes {
                return Err(CliError::config(format!(
                    "boundary.counts has {} entries for {} classes",
                    counts.len(),
                    classifier.num_classes
                )));
            }
            let attack = AttackParams {
                train_points: train.iter().map(|x| (x.clone(), classifier.label(x))).collect(),
                target_class: classifier.target_class,
                counts,
                seed: derive_seed(config.seed, SEED_BOUNDARY),
                clip: b.clip,
            };
            sample_boundary(model, &SamplingStrategy::Attack(attack), params).stage(Stage::Boundary)?
        }
    };
    if set.dim() != model.dim() {
        return Err(CliError::config(format!(
            "boundary has dimension {}, model expects {}",
            set.dim(),
            model.dim()
        )));
    }
    Ok(set)
}

pub fn geodesic_index(kernel: &KernelConfig, boundary: &BoundarySet) -> Result<Arc<GeodesicIndex>, CliError> {
    let k = kernel.k.unwrap_or_else(|| default_k(boundary.len()));
    Ok(Arc::new(build_index(boundary.clone(), k).stage(Stage::Geodesic)?))
}

/// WEG evaluator for `(lambda, rho)`, refusing non-PSD geodesic kernels unless allowed.
pub fn weg_kernel(
    index: &Arc<GeodesicIndex>,
    lambda: f64,
    rho: f64,
    require_psd: bool,
) -> Result<Arc<WegEvaluator>, CliError> {
    let eval = WegEvaluator::new(index.clone(), WegParams { lambda, rho }).stage(Stage::Kernel)?;
    if require_psd && !eval.eg.is_psd() {
        return Err(CliError::config(format!(
            "lambda = {lambda} gives a geodesic kernel with min eigenvalue {:.3e} (not PSD); \
             choose a value flagged PSD by validate-lambda or set kernel.require_psd = false",
            eval.eg.min_eigenvalue()
        )));
    }
    Ok(Arc::new(eval))
}

pub fn kernel(
    config: &KernelConfig,
    index: Option<&Arc<GeodesicIndex>>,
) -> Result<Arc<dyn CovarianceKernel>, CliError> {
    match config.kind {
        KernelKind::Rbf => Ok(Arc::new(RbfKernel::new(config.lambda).stage(Stage::Kernel)?)),
        KernelKind::Weg => {
            let index = index.expect("geodesic index built for WEG kernels");
            Ok(weg_kernel(index, config.lambda, config.rho, config.require_psd)?)
        }
    }
}

pub fn baseline(config: &ExplainerConfig, train: &[Vec<f64>]) -> BaselineSpec {
    if config.background {
        return BaselineSpec::Background(train.to_vec());
    }
    if let Some(b) = &config.baseline {
        return BaselineSpec::Reference(b.clone());
    }
    let n = train.len() as f64;
    let d = train[0].len();
    BaselineSpec::Reference((0..d).map(|j| train.iter().map(|x| x[j]).sum::<f64>() / n).collect())
}

pub fn method(config: &ExplainerConfig) -> Method {
    match config.kind {
        ExplainerKind::KernelShap => Method::KernelShap {
            coalitions: config.coalitions,
        },
        ExplainerKind::ShapleySampling => Method::ShapleySampling {
            permutations: config.permutations,
        },
        ExplainerKind::ShapleyExhaustive => Method::ShapleyExhaustive,
    }
}

/// Variances from a CSV: one row per training point, or a single row for all.
pub fn read_variances(path: &Path, rows: usize, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let table = read_points_csv(path, dim)?;
    match table.len() {
        1 => Ok(vec![table[0].clone(); rows]),
        n if n == rows => Ok(table),
        n => Err(CliError::config(format!(
            "{} has {n} variance rows; expected 1 or {rows}",
            path.display()
        ))),
    }
}

/// Explains every training point; noise comes from resampling and/or a variance file.
pub fn explain(
    config: &RunConfig,
    explainer_config: &ExplainerConfig,
    model: &dyn BlackBoxModel,
    train: &TrainingData,
) -> Result<Vec<ExplanationRecord>, CliError> {
    let records = match train {
        TrainingData::Explanations(r) => r.clone(),
        TrainingData::Points(points) => {
            let base = baseline(explainer_config, points);
            let explainer = AttributionExplainer {
                model,
                baseline: &base,
                method: method(explainer_config),
            };
            let explain_seed = derive_seed(config.seed, SEED_EXPLAIN);
            let tau_seed = derive_seed(config.seed, SEED_TAU);
            let k = explainer_config.resamples;
            points
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut r = explainer.explain(x, derive_seed(explain_seed, i as u64))?;
                    if k >= 2 {
                        r.noise_var = estimate_tau(&explainer, x, k, derive_seed(tau_seed, i as u64))?;
                    }
                    Ok(r)
                })
                .collect::<gpec::Result<Vec<_>>>()
                .stage(Stage::Explain)?
        }
    };
    match &explainer_config.variance_csv {
        None => Ok(records),
        Some(path) => {
            let d = records[0].x.len();
            let vars = read_variances(path, records.len(), d)?;
            records
                .iter()
                .zip(&vars)
                .map(|(r, v)| external_variance(r, v).stage(Stage::Explain))
                .collect()
        }
    }
}

pub fn without_noise(records: &[ExplanationRecord]) -> Vec<ExplanationRecord> {
    records
        .iter()
        .map(|r| ExplanationRecord {
            noise_var: vec![0.0; r.noise_var.len()],
            ..r.clone()
        })
        .collect()
}

pub fn fit_gp(records: &[ExplanationRecord], kernel: Arc<dyn CovarianceKernel>) -> Result<GpecModel, CliError> {
    fit(records, kernel).stage(Stage::Fit)
}

/// Grid (or CSV) test points for heatmaps.
pub fn test_points(config: &RunConfig) -> Result<Vec<Vec<f64>>, CliError> {
    let d = config.boundary.low.len();
    match &config.heatmap.points {
        Some(path) => read_points_csv(path, d),
        None => Ok(config.heatmap_bounds()?.grid(config.heatmap.resolution)),
    }
}

pub fn predict(model: &GpecModel, points: &[Vec<f64>]) -> Result<Vec<UncertaintyEstimate>, CliError> {
    model.predict_batch(points).stage(Stage::Predict)
}

/// Mean ci_width over all points and features.
pub fn mean_ci(estimates: &[UncertaintyEstimate]) -> f64 {
    let (sum, count) = estimates.iter().fold((0.0, 0usize), |(s, c), e| {
        (s + e.ci_width.iter().sum::<f64>(), c + e.ci_width.len())
    });
    sum / count as f64
}

/// Mean ci_width per feature.
pub fn feature_means(estimates: &[UncertaintyEstimate]) -> Vec<f64> {
    let s = estimates.first().map_or(0, |e| e.ci_width.len());
    (0..s)
        .map(|j| estimates.iter().map(|e| e.ci_width[j]).sum::<f64>() / estimates.len() as f64)
        .collect()
}
