//! Artifact writers: CSV tables, PGM heatmaps, overlays and the run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gpec::boundary::BoundarySet;
use gpec::explainers::ExplanationRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Min and max of the values mapped to black and white.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageScale {
    pub file: String,
    pub min: f64,
    pub max: f64,
}

/// Writes a row-major `resolution x resolution` field (first axis fastest
/// along columns, second axis increasing upwards) as an 8-bit binary PGM.
/// Darker pixels mean larger values; the scale is min-max per image.
pub fn write_pgm(path: &Path, values: &[f64], resolution: usize) -> std::io::Result<ImageScale> {
    assert_eq!(values.len(), resolution * resolution, "field is not square");
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut pixels = Vec::with_capacity(values.len());
    for row in 0..resolution {
        let j = resolution - 1 - row;
        for i in 0..resolution {
            let v = values[i * resolution + j];
            let t = if span > 0.0 { (v - min) / span } else { 0.5 };
            pixels.push((255.0 * (1.0 - t)).round() as u8);
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{resolution} {resolution}\n255\n")?;
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(ImageScale {
        file: file_name(path),
        min,
        max,
    })
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// `kind,x_1..x_d` rows for boundary and training points.
pub fn write_overlay(path: &Path, boundary: &BoundarySet, train: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = boundary.dim();
    let mut header = vec!["kind".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for (kind, points) in [("boundary", &boundary.points), ("train", &train.to_vec())] {
        for p in points.iter() {
            let mut row = vec![kind.to_string()];
            row.extend(p.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()
}

pub fn write_boundary(path: &Path, boundary: &BoundarySet) -> gpec::Result<()> {
    boundary.write_csv(BufWriter::new(File::create(path)?))
}

pub fn write_explanations(path: &Path, records: &[ExplanationRecord]) -> gpec::Result<()> {
    gpec::explainers::write_explanations_csv(records, BufWriter::new(File::create(path)?))
}

/// Generic headered numeric table.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

/// Fixed-width text rendering of a table for the terminal.
pub fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&width)
            .map(|(s, w)| format!("{s:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in rows {
        out.push('\n');
        out.push_str(&line(r));
    }
    out.push('\n');
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct Seeds {
    pub run: u64,
    pub train: u64,
    pub boundary: u64,
    pub explain: u64,
    pub tau: u64,
    pub test: u64,
}

impl Seeds {
    pub fn from_run(seed: u64) -> Self {
        use crate::pipeline::*;
        use gpec::explainers::derive_seed;
        Self {
            run: seed,
            train: derive_seed(seed, SEED_TRAIN),
            boundary: derive_seed(seed, SEED_BOUNDARY),
            explain: derive_seed(seed, SEED_EXPLAIN),
            tau: derive_seed(seed, SEED_TAU),
            test: derive_seed(seed, SEED_TEST),
        }
    }
}

/// Everything needed to understand and re-run an output directory.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Seeds,
    pub threads: usize,
    pub kernel: Option<String>,
    pub jitter: Option<f64>,
    pub boundary_points: Option<usize>,
    pub boundary_hash: Option<String>,
    pub train_points: Option<usize>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub images: Vec<ImageScale>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: "gpec".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config.hash(),
            config: serde_json::from_str(&config.canonical_json()).expect("valid json"),
            seeds: Seeds::from_run(config.seed),
            threads: rayon::current_num_threads(),
            kernel: None,
            jitter: None,
            boundary_points: None,
            boundary_hash: None,
            train_points: None,
            timings: BTreeMap::new(),
            images: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(file_name(path));
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(path)
    }
}
