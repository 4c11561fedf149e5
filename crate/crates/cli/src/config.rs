//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use gpec::Bounds;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve against the config file.
    pub output: PathBuf,
    pub model: ModelConfig,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub explainer: ExplainerConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub heatmap: HeatmapConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<CombinedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityConfig>,
    #[serde(default)]
    pub timing: TimingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ModelConfig {
    /// Built-in two-feature classifier (`cosine`, `linear`, `circle`).
    Analytic { expr: String },
    /// JSON weight file; `class` selects the one-vs-all view of a multiclass net.
    Mlp {
        path: PathBuf,
        #[serde(default)]
        softplus_beta: Option<f64>,
        #[serde(default)]
        class: Option<usize>,
    },
    /// JSON tree-ensemble file.
    Tree { path: PathBuf, dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default)]
    pub strategy: BoundaryStrategy,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    #[serde(default = "default_boundary_resolution")]
    pub resolution: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Reload a boundary CSV instead of sampling (`strategy = "csv"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Points attacked per class (`strategy = "attack"`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryStrategy {
    #[default]
    Grid,
    Attack,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub kind: KernelKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// kNN neighbours for the geodesic graph; defaults to `min(10, M - 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Candidates for `validate-lambda`.
    #[serde(default = "default_lambda_candidates")]
    pub lambda_candidates: Vec<f64>,
    /// Refuse to fit with a λ whose EG Gram is not PSD.
    #[serde(default = "default_true")]
    pub require_psd: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::Weg,
            lambda: default_lambda(),
            rho: default_rho(),
            k: None,
            lambda_candidates: default_lambda_candidates(),
            require_psd: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Weg,
    Rbf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainerConfig {
    #[serde(default)]
    pub kind: ExplainerKind,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_coalitions")]
    pub coalitions: usize,
    /// Resamples K for the empirical noise estimate; 0 keeps explanations noiseless.
    #[serde(default)]
    pub resamples: usize,
    /// Fixed removal baseline; defaults to the mean of the training points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<f64>>,
    /// Use every training point as a background row instead of a single baseline.
    #[serde(default)]
    pub background: bool,
    /// CSV of per-feature variances (one row per training point, or one row for all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_csv: Option<PathBuf>,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            kind: ExplainerKind::KernelShap,
            permutations: default_permutations(),
            coalitions: default_coalitions(),
            resamples: 0,
            baseline: None,
            background: false,
            variance_csv: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    #[default]
    KernelShap,
    ShapleySampling,
    ShapleyExhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub source: TrainSource,
    /// Number of uniformly drawn points (`source = "uniform"`).
    #[serde(default = "default_train_count")]
    pub count: usize,
    /// Headered CSV of inputs (`points`) or of explanations (`explanations`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSource {
    #[default]
    Uniform,
    Points,
    Explanations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapConfig {
    #[serde(default = "default_heatmap_resolution")]
    pub resolution: usize,
    /// Grid box; defaults to the boundary box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<Vec<f64>>,
    /// Evaluate at the points of a headered CSV instead of a grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    /// Write PGM images (2-D grids only).
    #[serde(default = "default_true")]
    pub images: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            resolution: default_heatmap_resolution(),
            low: None,
            high: None,
            points: None,
            images: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SweepConfig {
    /// Softplus β values applied to the configured MLP.
    Softplus { betas: Vec<f64> },
    /// Tree-ensemble files, e.g. increasing depth.
    Trees { paths: Vec<PathBuf> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinedConfig {
    /// Sampling budgets compared in one run; defaults to the explainer's.
    #[serde(default)]
    pub permutations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub lambdas: Vec<f64>,
    pub rhos: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "default_timing_samples")]
    pub samples: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            samples: default_timing_samples(),
        }
    }
}

fn default_boundary_resolution() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    60
}
fn default_lambda() -> f64 {
    gpec::geodesic::DEFAULT_LAMBDA
}
fn default_rho() -> f64 {
    gpec::wegkernel::DEFAULT_RHO
}
fn default_lambda_candidates() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
}
fn default_true() -> bool {
    true
}
fn default_permutations() -> usize {
    200
}
fn default_coalitions() -> usize {
    64
}
fn default_train_count() -> usize {
    40
}
fn default_heatmap_resolution() -> usize {
    100
}
fn default_timing_samples() -> usize {
    100
}

/// Drops `.` and folds `dir/..` without touching the filesystem.
fn normalize(path: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir if matches!(out.components().next_back(), Some(Component::Normal(_))) => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub seed: Option<u64>,
}

/// Largest grid evaluated in one run.
pub const MAX_GRID_POINTS: usize = 1_000_000;

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads and validates a config; relative paths are made relative to its directory.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(l) = overrides.lambda {
            self.kernel.lambda = l;
        }
        if let Some(r) = overrides.rho {
            self.kernel.rho = r;
        }
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = normalize(&base.join(&*p));
            }
        };
        fix(&mut self.output);
        match &mut self.model {
            ModelConfig::Mlp { path, .. } | ModelConfig::Tree { path, .. } => fix(path),
            ModelConfig::Analytic { .. } => {}
        }
        if let Some(p) = &mut self.boundary.path {
            fix(p);
        }
        if let Some(p) = &mut self.explainer.variance_csv {
            fix(p);
        }
        if let Some(p) = &mut self.train.path {
            fix(p);
        }
        if let Some(p) = &mut self.heatmap.points {
            fix(p);
        }
        if let Some(SweepConfig::Trees { paths }) = &mut self.sweep {
            paths.iter_mut().for_each(fix);
        }
    }

    pub fn boundary_bounds(&self) -> Result<Bounds, CliError> {
        Bounds::new(self.boundary.low.clone(), self.boundary.high.clone()).map_err(|e| CliError::at(Stage::Config, e))
    }

    pub fn heatmap_bounds(&self) -> Result<Bounds, CliError> {
        let low = self.heatmap.low.clone().unwrap_or_else(|| self.boundary.low.clone());
        let high = self.heatmap.high.clone().unwrap_or_else(|| self.boundary.high.clone());
        Bounds::new(low, high).map_err(|e| CliError::at(Stage::Config, e))
    }

    /// Range and existence checks that do not need the model.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::config(msg));
        self.boundary_bounds()?;
        self.heatmap_bounds()?;
        if self.heatmap.resolution < 2 && self.heatmap.points.is_none() {
            return bad("heatmap.resolution must be >= 2".into());
        }
        let d = self.boundary.low.len();
        if self.heatmap.points.is_none() && (self.heatmap.resolution as f64).powi(d as i32) > MAX_GRID_POINTS as f64 {
            return bad(format!(
                "a {}^{d} heatmap grid exceeds {MAX_GRID_POINTS} points; lower heatmap.resolution or pass heatmap.points",
                self.heatmap.resolution
            ));
        }
        if self.boundary.tol.is_nan() || self.boundary.tol <= 0.0 {
            return bad("boundary.tol must be > 0".into());
        }
        if self.boundary.resolution < 2 {
            return bad("boundary.resolution must be >= 2".into());
        }
        match self.boundary.strategy {
            BoundaryStrategy::Csv if self.boundary.path.is_none() => {
                return bad("boundary.strategy = \"csv\" needs boundary.path".into())
            }
            BoundaryStrategy::Attack if self.boundary.counts.is_none() => {
                return bad("boundary.strategy = \"attack\" needs boundary.counts".into())
            }
            _ => {}
        }
        if !(self.kernel.lambda > 0.0 && self.kernel.lambda.is_finite()) {
            return bad(format!("kernel.lambda must be > 0, got {}", self.kernel.lambda));
        }
        if !(self.kernel.rho >= 0.0 && self.kernel.rho.is_finite()) {
            return bad(format!("kernel.rho must be >= 0, got {}", self.kernel.rho));
        }
        if self.kernel.k == Some(0) {
            return bad("kernel.k must be >= 1".into());
        }
        if self.explainer.resamples == 1 {
            return bad("explainer.resamples must be 0 (noiseless) or >= 2".into());
        }
        if let Some(b) = &self.explainer.baseline {
            if b.len() != d {
                return bad(format!("explainer.baseline has {} entries, expected {d}", b.len()));
            }
        }
        match self.train.source {
            TrainSource::Uniform if self.train.count == 0 => {
                return bad("train.count is 0: the GP needs at least one training explanation".into())
            }
            TrainSource::Points | TrainSource::Explanations if self.train.path.is_none() => {
                return bad("train.path is required for csv training sources".into())
            }
            _ => {}
        }
        if let Some(SweepConfig::Softplus { betas }) = &self.sweep {
            if betas.iter().any(|b| b.is_nan() || *b <= 0.0) {
                return bad("sweep betas must be > 0".into());
            }
        }
        if let Some(s) = &self.sensitivity {
            if s.lambdas.is_empty() || s.rhos.is_empty() {
                return bad("sensitivity.lambdas and sensitivity.rhos must be non-empty".into());
            }
        }
        if self.timing.samples == 0 {
            return bad("timing.samples must be >= 1".into());
        }
        let mut files: Vec<&PathBuf> = Vec::new();
        match &self.model {
            ModelConfig::Mlp { path, .. } | ModelConfig::Tree { path, .. } => files.push(path),
            ModelConfig::Analytic { .. } => {}
        }
        files.extend(self.boundary.path.iter());
        files.extend(self.explainer.variance_csv.iter());
        files.extend(self.train.path.iter());
        files.extend(self.heatmap.points.iter());
        if let Some(SweepConfig::Trees { paths }) = &self.sweep {
            files.extend(paths.iter());
        }
        for f in files {
            if !f.is_file() {
                return bad(format!("referenced file {} does not exist", f.display()));
            }
        }
        Ok(())
    }

    /// Canonical JSON used for hashing and the manifest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        output = "out"
        [model]
        kind = "analytic"
        expr = "cosine"
        [boundary]
        low = [2.0, -4.0]
        high = [12.0, 4.0]
        [train]
        count = 10
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.kernel.lambda, 1.0);
        assert_eq!(c.kernel.rho, 0.1);
        assert_eq!(c.heatmap.resolution, 100);
        assert_eq!(c.explainer.kind, ExplainerKind::KernelShap);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\n[timing]\nsamples = 3\nbogus = 1\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut c = RunConfig::from_toml_str(MINIMAL).unwrap();
        let h = c.hash();
        c.apply(&Overrides {
            lambda: Some(2.0),
            rho: Some(0.0),
            seed: Some(9),
        });
        assert_eq!((c.kernel.lambda, c.kernel.rho, c.seed), (2.0, 0.0, 9));
        assert_ne!(c.hash(), h);
    }

    #[test]
    fn empty_training_set_is_a_config_error() {
        let text = MINIMAL.replace("count = 10", "count = 0");
        let c = RunConfig::from_toml_str(&text).unwrap();
        assert!(matches!(c.validate(), Err(e) if e.exit_code() == 2));
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let text = MINIMAL.replace("count = 10", "source = \"points\"\npath = \"/nonexistent/train.csv\"");
        let c = RunConfig::from_toml_str(&text).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn relative_paths_are_folded() {
        let mut c = RunConfig::from_toml_str(&MINIMAL.replace("\"out\"", "\"../out/run\"")).unwrap();
        c.resolve_paths(Path::new("configs"));
        assert_eq!(c.output, PathBuf::from("out/run"));
        assert_eq!(normalize(Path::new("../a/./b")), PathBuf::from("../a/b"));
    }
}
