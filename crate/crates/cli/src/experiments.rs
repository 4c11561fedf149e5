//! One function per subcommand. Each writes its artifacts and a manifest to
//! the configured output directory and returns the numbers it wrote.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gpec::boundary::BoundarySet;
use gpec::explainers::{derive_seed, ExplanationRecord};
use gpec::geodesic::{validate_lambda, GeodesicIndex, LambdaCheck};
use gpec::gp::{write_uncertainty_csv, GpecModel, UncertaintyEstimate};
use gpec::io::{save_geodesic_index, save_matrix, write_json, GramSidecar};
use gpec::models::{Activation, TreeEnsembleModel};
use gpec::wegkernel::CovarianceKernel;
use gpec::GpecError;

use crate::config::{ExplainerKind, KernelKind, ModelConfig, RunConfig, SweepConfig};
use crate::error::{CliError, Stage, StageExt};
use crate::output::{
    file_name, sha256_file, text_table, write_boundary, write_explanations, write_overlay, write_pgm, write_table,
    Manifest,
};
use crate::pipeline::{self, Classifier, TrainingData, SEED_TEST};

/// Largest Δ deficit accepted as round-off in the combined experiment.
pub const DELTA_TOLERANCE: f64 = -1e-10;

const CI_NOTE: &str = "ci_width is the full width of the central 95% interval (2 x 1.959964 x posterior std); \
                       averages are taken over full widths";

struct Clock {
    last: Instant,
    laps: Vec<(String, f64)>,
}

impl Clock {
    fn start() -> Self {
        Self {
            last: Instant::now(),
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, name: &str) -> f64 {
        let now = Instant::now();
        let secs = (now - self.last).as_secs_f64();
        self.last = now;
        self.laps.push((name.to_string(), secs));
        secs
    }

    fn record(&self, manifest: &mut Manifest) {
        for (k, v) in &self.laps {
            *manifest.timings.entry(k.clone()).or_insert(0.0) += v;
        }
    }
}

fn output_dir(config: &RunConfig) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.output)?;
    Ok(config.output.clone())
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Shared front half of the pipeline.
struct Prepared {
    classifier: Classifier,
    train: TrainingData,
    boundary: BoundarySet,
    index: Option<Arc<GeodesicIndex>>,
}

fn prepare(config: &RunConfig, needs_index: bool, clock: &mut Clock) -> Result<Prepared, CliError> {
    let classifier = pipeline::load_classifier(&config.model)?;
    let d = classifier.binary.dim();
    if config.boundary.low.len() != d {
        return Err(CliError::config(format!(
            "boundary box has {} dimensions, model expects {d}",
            config.boundary.low.len()
        )));
    }
    let train = pipeline::training_data(config)?;
    clock.lap("load");
    let boundary = pipeline::boundary(config, &classifier, &train.points())?;
    clock.lap("boundary");
    let index = if needs_index {
        Some(pipeline::geodesic_index(&config.kernel, &boundary)?)
    } else {
        None
    };
    clock.lap("geodesic");
    Ok(Prepared {
        classifier,
        train,
        boundary,
        index,
    })
}

impl Prepared {
    fn explain(
        &self,
        config: &RunConfig,
        explainer: &crate::config::ExplainerConfig,
    ) -> Result<Vec<ExplanationRecord>, CliError> {
        pipeline::explain(config, explainer, self.classifier.binary.as_ref(), &self.train)
    }
}

/// Writes boundary, overlay and (for WEG) geodesic files; returns the boundary hash.
fn write_common(dir: &Path, prepared: &Prepared, manifest: &mut Manifest) -> Result<String, CliError> {
    let boundary_path = dir.join("boundary.csv");
    write_boundary(&boundary_path, &prepared.boundary).stage(Stage::Output)?;
    manifest.output(&boundary_path);
    let hash = sha256_file(&boundary_path)?;
    let overlay = dir.join("overlay.csv");
    write_overlay(&overlay, &prepared.boundary, &prepared.train.points())?;
    manifest.output(&overlay);
    if let Some(index) = &prepared.index {
        let files = save_geodesic_index(index, dir).stage(Stage::Output)?;
        manifest.output(&files.distances);
        manifest.output(&files.sidecar);
    }
    manifest.boundary_points = Some(prepared.boundary.len());
    manifest.boundary_hash = Some(hash.clone());
    manifest.train_points = Some(prepared.train.points().len());
    Ok(hash)
}

fn write_gram(
    dir: &Path,
    gp: &GpecModel,
    config: &RunConfig,
    boundary_hash: &str,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let bin = dir.join("gram.bin");
    save_matrix(&gp.gram, &bin).stage(Stage::Output)?;
    let sidecar = dir.join("gram.json");
    let weg = config.kernel.kind == KernelKind::Weg;
    write_json(
        &GramSidecar {
            rows: gp.gram.nrows(),
            cols: gp.gram.ncols(),
            kernel: gp.kernel.describe(),
            lambda: config.kernel.lambda,
            rho: weg.then_some(config.kernel.rho),
            jitter: gp.jitter,
            boundary_hash: weg.then(|| boundary_hash.to_string()),
        },
        &sidecar,
    )
    .stage(Stage::Output)?;
    manifest.output(&bin);
    manifest.output(&sidecar);
    Ok(())
}

/// One PGM per feature when the points form a square 2-D grid.
fn write_feature_images(
    dir: &Path,
    prefix: &str,
    config: &RunConfig,
    fields: &[Vec<f64>],
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let res = config.heatmap.resolution;
    if !config.heatmap.images || config.heatmap.points.is_some() || config.boundary.low.len() != 2 {
        return Ok(());
    }
    for (j, field) in fields.iter().enumerate() {
        if field.len() != res * res {
            continue;
        }
        let path = dir.join(format!("{prefix}_x{}.pgm", j + 1));
        let scale = write_pgm(&path, field, res)?;
        manifest.output(&path);
        manifest.images.push(scale);
    }
    Ok(())
}

fn ci_fields(estimates: &[UncertaintyEstimate]) -> Vec<Vec<f64>> {
    let s = estimates.first().map_or(0, |e| e.ci_width.len());
    (0..s)
        .map(|j| estimates.iter().map(|e| e.ci_width[j]).collect())
        .collect()
}

/// Human-readable summary of a run; the binary echoes it to stdout.
pub const SUMMARY_FILE: &str = "summary.txt";

fn write_summary(dir: &Path, text: &str, manifest: &mut Manifest) -> Result<(), CliError> {
    let path = dir.join(SUMMARY_FILE);
    std::fs::write(&path, text)?;
    manifest.output(&path);
    Ok(())
}

pub struct HeatmapResult {
    pub points: Vec<Vec<f64>>,
    pub estimates: Vec<UncertaintyEstimate>,
    pub boundary: BoundarySet,
    pub train: Vec<ExplanationRecord>,
    pub gp: GpecModel,
    pub jitter: f64,
    pub config_hash: String,
    pub manifest: Manifest,
}

pub fn run_heatmap(config: &RunConfig) -> Result<HeatmapResult, CliError> {
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("heatmap", config);
    let mut clock = Clock::start();
    let prepared = prepare(config, config.kernel.kind == KernelKind::Weg, &mut clock)?;
    let kernel = pipeline::kernel(&config.kernel, prepared.index.as_ref())?;
    clock.lap("kernel");
    let records = prepared.explain(config, &config.explainer)?;
    clock.lap("explain");
    let gp = pipeline::fit_gp(&records, kernel)?;
    clock.lap("fit");
    let points = pipeline::test_points(config)?;
    let estimates = pipeline::predict(&gp, &points)?;
    clock.lap("predict");

    let hash = write_common(&dir, &prepared, &mut manifest)?;
    let expl = dir.join("explanations.csv");
    write_explanations(&expl, &records).stage(Stage::Output)?;
    manifest.output(&expl);
    let grid = dir.join("grid.csv");
    write_uncertainty_csv(
        &points,
        &estimates,
        std::io::BufWriter::new(std::fs::File::create(&grid)?),
    )
    .stage(Stage::Output)?;
    manifest.output(&grid);
    write_gram(&dir, &gp, config, &hash, &mut manifest)?;
    write_feature_images(&dir, "ci", config, &ci_fields(&estimates), &mut manifest)?;
    clock.lap("write");

    let text = format!(
        "{} test points, {} boundary points, jitter {:e}, mean ci_width {:.6e}\n",
        points.len(),
        prepared.boundary.len(),
        gp.jitter,
        pipeline::mean_ci(&estimates)
    );
    write_summary(&dir, &text, &mut manifest)?;
    manifest.kernel = Some(gp.kernel.describe());
    manifest.jitter = Some(gp.jitter);
    manifest.notes.push(CI_NOTE.into());
    manifest
        .notes
        .push("images: darker = larger ci_width, linear min-max scale per image".into());
    clock.record(&mut manifest);
    manifest.write(&dir)?;
    Ok(HeatmapResult {
        points,
        estimates,
        boundary: prepared.boundary,
        train: records,
        jitter: gp.jitter,
        gp,
        config_hash: config.hash(),
        manifest,
    })
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub variant: String,
    pub label: String,
    pub boundary_points: usize,
    pub jitter: f64,
    pub mean_ci: f64,
    pub feature_means: Vec<f64>,
}

pub const SWEEP_NOTE: &str = "the gradient-boosted log-loss / gamma models of the original regularization study \
                              are not available here; this sweep substitutes softplus-beta MLP (or tree-ensemble) \
                              variants and only the direction of the trend is meaningful";

pub fn run_regularization_sweep(config: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("sweep-regularization needs a [sweep] section"))?;
    let variants: Vec<(String, Classifier)> = match sweep {
        SweepConfig::Softplus { betas } => {
            let ModelConfig::Mlp { path, class, .. } = &config.model else {
                return Err(CliError::config("a softplus sweep needs model.kind = \"mlp\""));
            };
            let base = pipeline::load_mlp(path, None)?;
            betas
                .iter()
                .map(|&b| {
                    let m = base.with_activation(Activation::Softplus(b)).stage(Stage::Model)?;
                    Ok((format!("softplus_beta={b}"), Classifier::from_mlp(m, *class)?))
                })
                .collect::<Result<_, CliError>>()?
        }
        SweepConfig::Trees { paths } => {
            let dim = config.boundary.low.len();
            paths
                .iter()
                .map(|p| {
                    let t = TreeEnsembleModel::load(p, dim).stage(Stage::Model)?;
                    Ok((file_name(p), Classifier::from_binary(Arc::new(t))))
                })
                .collect::<Result<_, CliError>>()?
        }
    };
    if variants.len() < 2 {
        return Err(CliError::at(
            Stage::Config,
            GpecError::Parameter(format!("a sweep needs at least 2 variants, got {}", variants.len())),
        ));
    }
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("sweep-regularization", config);
    let mut clock = Clock::start();
    let train = pipeline::training_data(config)?;
    let points = pipeline::test_points(config)?;
    let mut rows = Vec::new();
    for (name, classifier) in variants {
        let boundary = pipeline::boundary(config, &classifier, &train.points())?;
        let boundary_path = dir.join(format!("boundary_{name}.csv"));
        write_boundary(&boundary_path, &boundary).stage(Stage::Output)?;
        manifest.output(&boundary_path);
        let index = match config.kernel.kind {
            KernelKind::Weg => Some(pipeline::geodesic_index(&config.kernel, &boundary)?),
            KernelKind::Rbf => None,
        };
        let kernel = pipeline::kernel(&config.kernel, index.as_ref())?;
        let records = pipeline::explain(config, &config.explainer, classifier.binary.as_ref(), &train)?;
        let gp = pipeline::fit_gp(&records, kernel)?;
        let estimates = pipeline::predict(&gp, &points)?;
        clock.lap(&name);
        rows.push(SweepRow {
            label: classifier.binary.label(),
            variant: name,
            boundary_points: boundary.len(),
            jitter: gp.jitter,
            mean_ci: pipeline::mean_ci(&estimates),
            feature_means: pipeline::feature_means(&estimates),
        });
    }
    let d = rows[0].feature_means.len();
    let mut header: Vec<String> = ["variant", "boundary_points", "jitter", "mean_ci"]
        .map(String::from)
        .to_vec();
    header.extend((1..=d).map(|j| format!("mean_ci_{j}")));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                r.variant.clone(),
                r.boundary_points.to_string(),
                fmt(r.jitter),
                fmt(r.mean_ci),
            ];
            row.extend(r.feature_means.iter().copied().map(fmt));
            row
        })
        .collect();
    let csv_path = dir.join("sweep.csv");
    write_table(&csv_path, &header, &table)?;
    manifest.output(&csv_path);
    let text = format!("{}\nnote: {SWEEP_NOTE}\n", text_table(&header, &table));
    write_summary(&dir, &text, &mut manifest)?;
    manifest.notes.push(SWEEP_NOTE.into());
    manifest.notes.push(CI_NOTE.into());
    manifest.notes.push(format!(
        "variants: {}",
        rows.iter().map(|r| r.variant.as_str()).collect::<Vec<_>>().join(", ")
    ));
    clock.record(&mut manifest);
    manifest.write(&dir)?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct CombinedRow {
    pub permutations: Option<usize>,
    pub mean_noise_var: f64,
    pub mean_delta: f64,
    pub min_delta: f64,
    pub mean_ci_noiseless: f64,
    pub mean_ci_noisy: f64,
}

pub fn run_combined(config: &RunConfig) -> Result<Vec<CombinedRow>, CliError> {
    let external = config.explainer.variance_csv.is_some();
    if !external && config.explainer.resamples < 2 {
        return Err(CliError::config(
            "combined needs explainer.resamples >= 2 (empirical noise) or explainer.variance_csv",
        ));
    }
    let budgets: Vec<Option<usize>> = match (&config.combined, config.explainer.kind) {
        (Some(c), ExplainerKind::ShapleySampling) if !c.permutations.is_empty() => {
            c.permutations.iter().map(|p| Some(*p)).collect()
        }
        (_, ExplainerKind::ShapleySampling) => vec![Some(config.explainer.permutations)],
        _ => vec![None],
    };
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("combined", config);
    let mut clock = Clock::start();
    let prepared = prepare(config, config.kernel.kind == KernelKind::Weg, &mut clock)?;
    let kernel = pipeline::kernel(&config.kernel, prepared.index.as_ref())?;
    let points = pipeline::test_points(config)?;
    let hash = write_common(&dir, &prepared, &mut manifest)?;
    let d = config.boundary.low.len();
    let mut rows = Vec::new();
    for budget in budgets {
        let mut explainer = config.explainer.clone();
        if let Some(p) = budget {
            explainer.permutations = p;
        }
        let tag = budget.map_or_else(|| "external".to_string(), |p| format!("p{p}"));
        let noisy_records = prepared.explain(config, &explainer)?;
        let clean_records = pipeline::without_noise(&noisy_records);
        let gp_a = pipeline::fit_gp(&clean_records, kernel.clone())?;
        let gp_b = pipeline::fit_gp(&noisy_records, kernel.clone())?;
        let a = pipeline::predict(&gp_a, &points)?;
        let b = pipeline::predict(&gp_b, &points)?;
        clock.lap(&format!("combined_{tag}"));

        let delta: Vec<Vec<f64>> = a
            .iter()
            .zip(&b)
            .map(|(ea, eb)| eb.ci_width.iter().zip(&ea.ci_width).map(|(y, x)| y - x).collect())
            .collect();
        let flat: Vec<f64> = delta.iter().flatten().copied().collect();
        let min_delta = flat.iter().copied().fold(f64::INFINITY, f64::min);
        let noise: Vec<f64> = noisy_records.iter().flat_map(|r| r.noise_var.iter().copied()).collect();
        let row = CombinedRow {
            permutations: budget,
            mean_noise_var: noise.iter().sum::<f64>() / noise.len() as f64,
            mean_delta: flat.iter().sum::<f64>() / flat.len() as f64,
            min_delta,
            mean_ci_noiseless: pipeline::mean_ci(&a),
            mean_ci_noisy: pipeline::mean_ci(&b),
        };

        let mut header: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
        for prefix in ["ci_a", "ci_b", "delta"] {
            header.extend((1..=d).map(|j| format!("{prefix}_{j}")));
        }
        let table: Vec<Vec<String>> = points
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.iter()
                    .chain(&a[i].ci_width)
                    .chain(&b[i].ci_width)
                    .chain(&delta[i])
                    .copied()
                    .map(fmt)
                    .collect()
            })
            .collect();
        let path = dir.join(format!("combined_{tag}.csv"));
        write_table(&path, &header, &table)?;
        manifest.output(&path);
        let expl = dir.join(format!("explanations_{tag}.csv"));
        write_explanations(&expl, &noisy_records).stage(Stage::Output)?;
        manifest.output(&expl);
        write_feature_images(&dir, &format!("noiseless_{tag}"), config, &ci_fields(&a), &mut manifest)?;
        write_feature_images(&dir, &format!("noisy_{tag}"), config, &ci_fields(&b), &mut manifest)?;
        let delta_fields: Vec<Vec<f64>> = (0..d).map(|j| delta.iter().map(|r| r[j]).collect()).collect();
        write_feature_images(&dir, &format!("delta_{tag}"), config, &delta_fields, &mut manifest)?;
        if rows.is_empty() {
            write_gram(&dir, &gp_a, config, &hash, &mut manifest)?;
            manifest.jitter = Some(gp_a.jitter);
            manifest.kernel = Some(gp_a.kernel.describe());
        }
        rows.push(row);
    }

    let header: Vec<String> = [
        "permutations",
        "mean_noise_var",
        "mean_delta",
        "min_delta",
        "mean_ci_noiseless",
        "mean_ci_noisy",
    ]
    .map(String::from)
    .to_vec();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.permutations.map_or_else(|| "external".into(), |p| p.to_string()),
                fmt(r.mean_noise_var),
                fmt(r.mean_delta),
                fmt(r.min_delta),
                fmt(r.mean_ci_noiseless),
                fmt(r.mean_ci_noisy),
            ]
        })
        .collect();
    let summary = dir.join("combined.csv");
    write_table(&summary, &header, &table)?;
    manifest.output(&summary);
    write_summary(&dir, &text_table(&header, &table), &mut manifest)?;
    manifest.notes.push(CI_NOTE.into());
    manifest
        .notes
        .push("delta = noisy ci_width - noiseless ci_width; it is never below -1e-10".into());
    clock.record(&mut manifest);
    manifest.write(&dir)?;
    if let Some(bad) = rows.iter().find(|r| r.min_delta < DELTA_TOLERANCE) {
        return Err(CliError::at(
            Stage::Predict,
            GpecError::Numerical(format!("noise lowered ci_width by {:e}", -bad.min_delta)),
        ));
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct SensitivityRow {
    pub lambda: f64,
    pub rho: f64,
    pub psd: bool,
    pub jitter: Option<f64>,
    pub mean_ci: Option<f64>,
    /// Variance of the ci_width field over the grid, averaged over features.
    pub field_variance: Option<f64>,
}

fn field_variance(estimates: &[UncertaintyEstimate]) -> f64 {
    let fields = ci_fields(estimates);
    fields
        .iter()
        .map(|f| {
            let n = f.len() as f64;
            let mean = f.iter().sum::<f64>() / n;
            f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / fields.len() as f64
}

pub fn run_sensitivity(config: &RunConfig) -> Result<Vec<SensitivityRow>, CliError> {
    let grid = config
        .sensitivity
        .as_ref()
        .ok_or_else(|| CliError::config("sensitivity needs a [sensitivity] section"))?;
    if config.kernel.kind != KernelKind::Weg {
        return Err(CliError::config(
            "sensitivity sweeps the WEG kernel; set kernel.kind = \"weg\"",
        ));
    }
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("sensitivity", config);
    let mut clock = Clock::start();
    let prepared = prepare(config, true, &mut clock)?;
    let index = prepared.index.clone().expect("index built");
    let records = prepared.explain(config, &config.explainer)?;
    clock.lap("explain");
    let points = pipeline::test_points(config)?;
    write_common(&dir, &prepared, &mut manifest)?;
    let mut rows = Vec::new();
    for &lambda in &grid.lambdas {
        for &rho in &grid.rhos {
            let kernel = match pipeline::weg_kernel(&index, lambda, rho, config.kernel.require_psd) {
                Ok(k) => k,
                Err(CliError::Config(_)) => {
                    rows.push(SensitivityRow {
                        lambda,
                        rho,
                        psd: false,
                        jitter: None,
                        mean_ci: None,
                        field_variance: None,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let psd = kernel.eg.is_psd();
            let gp = pipeline::fit_gp(&records, kernel)?;
            let estimates = pipeline::predict(&gp, &points)?;
            clock.lap(&format!("lambda={lambda},rho={rho}"));
            write_feature_images(
                &dir,
                &format!("ci_l{lambda}_r{rho}"),
                config,
                &ci_fields(&estimates),
                &mut manifest,
            )?;
            rows.push(SensitivityRow {
                lambda,
                rho,
                psd,
                jitter: Some(gp.jitter),
                mean_ci: Some(pipeline::mean_ci(&estimates)),
                field_variance: Some(field_variance(&estimates)),
            });
        }
    }
    let header: Vec<String> = ["lambda", "rho", "status", "jitter", "mean_ci", "field_variance"]
        .map(String::from)
        .to_vec();
    let opt = |v: Option<f64>| v.map_or_else(String::new, fmt);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let status = match (r.mean_ci.is_some(), r.psd) {
                (false, _) => "skipped_non_psd",
                (true, true) => "ok",
                (true, false) => "ok_non_psd",
            };
            vec![
                fmt(r.lambda),
                fmt(r.rho),
                status.into(),
                opt(r.jitter),
                opt(r.mean_ci),
                opt(r.field_variance),
            ]
        })
        .collect();
    let path = dir.join("sensitivity.csv");
    write_table(&path, &header, &table)?;
    manifest.output(&path);
    write_summary(&dir, &text_table(&header, &table), &mut manifest)?;
    manifest
        .notes
        .push("heatmap scales are not shared between images; see images[].min / max".into());
    manifest.notes.push(CI_NOTE.into());
    clock.record(&mut manifest);
    manifest.write(&dir)?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct TimingReport {
    pub setup: Vec<(String, f64)>,
    pub samples: usize,
    pub per_sample_seconds: f64,
    pub config_hash: String,
}

pub fn run_timing(config: &RunConfig) -> Result<TimingReport, CliError> {
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("timing", config);
    let mut clock = Clock::start();
    let prepared = prepare(config, config.kernel.kind == KernelKind::Weg, &mut clock)?;
    let kernel: Arc<dyn CovarianceKernel> = pipeline::kernel(&config.kernel, prepared.index.as_ref())?;
    clock.lap("kernel");
    let records = prepared.explain(config, &config.explainer)?;
    clock.lap("explain");
    let gp = pipeline::fit_gp(&records, kernel)?;
    clock.lap("fit");
    let samples = pipeline::uniform_points(
        &config.heatmap_bounds()?,
        config.timing.samples,
        derive_seed(config.seed, SEED_TEST),
    );
    let start = Instant::now();
    for x in &samples {
        gp.predict(x).stage(Stage::Predict)?;
    }
    let per_sample = start.elapsed().as_secs_f64() / samples.len() as f64;

    let setup: Vec<(String, f64)> = clock.laps.clone();
    let header: Vec<String> = vec!["stage".into(), "seconds".into()];
    let mut table: Vec<Vec<String>> = setup.iter().map(|(k, v)| vec![k.clone(), format!("{v:.6}")]).collect();
    table.push(vec![
        format!("inference_per_sample (mean of {})", samples.len()),
        format!("{per_sample:.6}"),
    ]);
    let path = dir.join("timing.csv");
    write_table(&path, &header, &table)?;
    manifest.output(&path);
    let text = format!("config {}\n{}", config.hash(), text_table(&header, &table));
    write_summary(&dir, &text, &mut manifest)?;
    manifest.kernel = Some(gp.kernel.describe());
    manifest.jitter = Some(gp.jitter);
    manifest.boundary_points = Some(prepared.boundary.len());
    manifest.train_points = Some(records.len());
    manifest
        .notes
        .push("inference excludes boundary sampling, geodesics, explanation and fitting (one-time setup)".into());
    clock.record(&mut manifest);
    manifest.timings.insert("inference_per_sample".into(), per_sample);
    manifest.write(&dir)?;
    Ok(TimingReport {
        setup,
        samples: samples.len(),
        per_sample_seconds: per_sample,
        config_hash: config.hash(),
    })
}

pub fn run_sample_boundary(config: &RunConfig) -> Result<BoundarySet, CliError> {
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("sample-boundary", config);
    let mut clock = Clock::start();
    let prepared = prepare(config, true, &mut clock)?;
    write_common(&dir, &prepared, &mut manifest)?;
    let text = format!(
        "{} boundary points (tolerance {:e}) written to {}\n",
        prepared.boundary.len(),
        prepared.boundary.tolerance,
        dir.display()
    );
    write_summary(&dir, &text, &mut manifest)?;
    clock.record(&mut manifest);
    manifest.write(&dir)?;
    Ok(prepared.boundary)
}

pub fn run_validate_lambda(config: &RunConfig) -> Result<Vec<LambdaCheck>, CliError> {
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new("validate-lambda", config);
    let mut clock = Clock::start();
    let prepared = prepare(config, true, &mut clock)?;
    let index = prepared.index.as_ref().expect("index built");
    let checks = validate_lambda(index, &config.kernel.lambda_candidates).stage(Stage::Kernel)?;
    clock.lap("eigen");
    let header: Vec<String> = ["lambda", "min_eigenvalue", "is_psd"].map(String::from).to_vec();
    let table: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![fmt(c.lambda), fmt(c.min_eigenvalue), c.is_psd.to_string()])
        .collect();
    let path = dir.join("lambda.csv");
    write_table(&path, &header, &table)?;
    manifest.output(&path);
    write_common(&dir, &prepared, &mut manifest)?;
    write_summary(&dir, &text_table(&header, &table), &mut manifest)?;
    manifest.notes.push(
        "lambdas with is_psd = false are refused by the fitting commands unless kernel.require_psd = false".into(),
    );
    clock.record(&mut manifest);
    manifest.write(&dir)?;
    Ok(checks)
}
