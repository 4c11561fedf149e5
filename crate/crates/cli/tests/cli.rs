use std::path::{Path, PathBuf};
use std::process::Command;

use gpec_cli::experiments::{run_combined, run_heatmap, run_regularization_sweep, run_sensitivity, run_timing};
use gpec_cli::RunConfig;
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 3
output = "out"

[model]
kind = "analytic"
expr = "cosine"

[boundary]
low = [2.0, -4.0]
high = [12.0, 4.0]
resolution = 30

[train]
count = 15

[heatmap]
resolution = 20
"#;

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn load(dir: &TempDir, text: &str) -> RunConfig {
    let path = write_config(dir, "run.toml", text);
    RunConfig::load(&path, &Default::default()).unwrap()
}

fn gpec(args: &[&str], config: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gpec"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("GPEC_SEED")
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn heatmap_writes_every_artifact() {
    let dir = TempDir::new().unwrap();
    let config = load(&dir, SMALL);
    let result = run_heatmap(&config).unwrap();
    assert_eq!(result.points.len(), 400);
    assert!(result.estimates.iter().all(|e| e.ci_width.len() == 2));
    for f in [
        "boundary.csv",
        "explanations.csv",
        "grid.csv",
        "overlay.csv",
        "ci_x1.pgm",
        "ci_x2.pgm",
        "geodesic.bin",
        "geodesic.json",
        "gram.bin",
        "gram.json",
        "manifest.json",
    ] {
        assert!(config.output.join(f).exists(), "{f} missing");
    }
    let m = manifest(&config.output);
    assert_eq!(m["command"], "heatmap");
    assert_eq!(m["config_hash"], config.hash());
    assert_eq!(m["jitter"], result.jitter);
    assert_eq!(m["images"].as_array().unwrap().len(), 2);
    assert!(m["timings"]["fit"].is_number());
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config.output.join("gram.json")).unwrap()).unwrap();
    assert_eq!(sidecar["boundary_hash"], m["boundary_hash"]);
}

#[test]
fn reimported_csvs_reproduce_the_grid() {
    let dir = TempDir::new().unwrap();
    let first = load(&dir, SMALL);
    run_heatmap(&first).unwrap();
    let out = first.output.display().to_string();
    let text = SMALL
        .replace("output = \"out\"", "output = \"again\"")
        .replace(
            "resolution = 30",
            &format!("strategy = \"csv\"\npath = \"{out}/boundary.csv\""),
        )
        .replace(
            "count = 15",
            &format!("source = \"explanations\"\npath = \"{out}/explanations.csv\""),
        )
        .replace("resolution = 20", &format!("points = \"{out}/grid.csv\""));
    let second = load(&dir, &text);
    run_heatmap(&second).unwrap();
    let a = std::fs::read(first.output.join("grid.csv")).unwrap();
    let b = std::fs::read(second.output.join("grid.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(gpec(&["heatmap"], &missing).status.code(), Some(2));

    let empty_train = write_config(&dir, "empty.toml", &SMALL.replace("count = 15", "count = 0"));
    assert_eq!(gpec(&["heatmap"], &empty_train).status.code(), Some(2));

    // The boundary 2cos(10/x1) never reaches x2 > 2.
    let no_boundary = write_config(&dir, "nob.toml", &SMALL.replace("[2.0, -4.0]", "[2.0, 3.0]"));
    let out = gpec(&["heatmap"], &no_boundary);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary"));

    let one_variant = write_config(
        &dir,
        "one.toml",
        &format!("{SMALL}\n[sweep]\nkind = \"trees\"\npaths = []\n"),
    );
    assert_eq!(gpec(&["sweep-regularization"], &one_variant).status.code(), Some(2));

    let ok = write_config(&dir, "ok.toml", SMALL);
    assert_eq!(gpec(&["sample-boundary"], &ok).status.code(), Some(0));
}

#[test]
fn seed_flag_and_env_override_the_file() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "run.toml", SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_gpec"))
        .args(["sample-boundary", "--config"])
        .arg(&config)
        .env("GPEC_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest(&dir.path().join("out"))["seeds"]["run"], 99);
    assert!(gpec(&["sample-boundary", "--seed", "5"], &config).status.success());
    assert_eq!(manifest(&dir.path().join("out"))["seeds"]["run"], 5);
}

#[test]
fn rho_zero_gives_a_flat_field_and_rho_sharpens_it() {
    let dir = TempDir::new().unwrap();
    let config = load(
        &dir,
        &format!("{SMALL}\n[sensitivity]\nlambdas = [1.0]\nrhos = [0.0, 0.1, 0.5, 1.0]\n"),
    );
    let rows = run_sensitivity(&config).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].field_variance.unwrap() < 1e-20);
    let v: Vec<f64> = rows.iter().map(|r| r.field_variance.unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] >= w[0]), "{v:?}");
    assert!(manifest(&config.output)["notes"].to_string().contains("scales"));
}

#[test]
fn single_cell_sensitivity_matches_heatmap() {
    let dir = TempDir::new().unwrap();
    let heat = load(&dir, SMALL);
    let h = run_heatmap(&heat).unwrap();
    let sens = load(
        &dir,
        &format!(
            "{}\n[sensitivity]\nlambdas = [1.0]\nrhos = [0.1]\n",
            SMALL.replace("\"out\"", "\"sens\"")
        ),
    );
    let rows = run_sensitivity(&sens).unwrap();
    assert_eq!(rows[0].mean_ci, Some(gpec_cli::pipeline::mean_ci(&h.estimates)));
}

#[test]
fn zero_injected_variance_leaves_ci_unchanged() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("zero.csv"), "v_1,v_2\n0,0\n").unwrap();
    let text = SMALL.replace("[train]", "[explainer]\nvariance_csv = \"zero.csv\"\n\n[train]");
    let rows = run_combined(&load(&dir, &text)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].min_delta, 0.0);
    assert_eq!(rows[0].mean_delta, 0.0);
}

#[test]
fn combined_without_a_noise_source_is_rejected() {
    let dir = TempDir::new().unwrap();
    let err = run_combined(&load(&dir, SMALL)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn repeated_sweep_variant_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let net = r#"{"layers": [{"weight": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0]},
                             {"weight": [[1.0, -1.0]], "bias": [0.1]}], "activation": "relu"}"#;
    std::fs::write(dir.path().join("net.json"), net).unwrap();
    let text = SMALL
        .replace(
            "kind = \"analytic\"\nexpr = \"cosine\"",
            "kind = \"mlp\"\npath = \"net.json\"",
        )
        .replace("[2.0, -4.0]", "[-2.0, -2.0]")
        .replace("[12.0, 4.0]", "[2.0, 2.0]");
    let config = load(
        &dir,
        &format!("{text}\n[sweep]\nkind = \"softplus\"\nbetas = [2.0, 2.0]\n"),
    );
    let rows = run_regularization_sweep(&config).unwrap();
    assert!((rows[0].mean_ci - rows[1].mean_ci).abs() <= 1e-12);
    let m = manifest(&config.output);
    assert!(m["notes"].to_string().contains("softplus_beta=2"));
    assert!(std::fs::read_to_string(config.output.join("summary.txt"))
        .unwrap()
        .contains("softplus"));
}

#[test]
fn timing_separates_setup_from_inference() {
    let dir = TempDir::new().unwrap();
    let config = load(&dir, SMALL);
    let report = run_timing(&config).unwrap();
    assert_eq!(report.samples, 100);
    assert!(report.setup.iter().any(|(k, _)| k == "boundary"));
    assert!(report.per_sample_seconds > 0.0);
    let summary = std::fs::read_to_string(config.output.join("summary.txt")).unwrap();
    assert!(summary.contains(&report.config_hash));
}
