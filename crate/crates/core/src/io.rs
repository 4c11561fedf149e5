//! On-disk formats for distance and Gram matrices.
//!
//! Matrices are stored flat: `rows: u64 LE`, `cols: u64 LE`, then
//! `rows * cols` little-endian `f64` values in row-major order. A JSON
//! sidecar next to each matrix records how it was built.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySet;
use crate::error::{GpecError, Result};
use crate::geodesic::{GeodesicIndex, ShortestPathMethod};

pub fn write_matrix<W: Write>(matrix: &DMatrix<f64>, mut writer: W) -> Result<()> {
    writer.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    writer.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            writer.write_all(&matrix[(i, j)].to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut reader: R) -> Result<DMatrix<f64>> {
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = next_u64(&mut reader)?;
    let cols = next_u64(&mut reader)?;
    let implausible = || GpecError::Load {
        what: "matrix".into(),
        reason: format!("implausible shape {rows}x{cols}"),
    };
    let count = rows
        .checked_mul(cols)
        .filter(|c| *c <= 1 << 32)
        .ok_or_else(implausible)?;
    let (rows, cols, count) = match (usize::try_from(rows), usize::try_from(cols), usize::try_from(count)) {
        (Ok(r), Ok(c), Ok(n)) if n.checked_mul(8).is_some() => (r, c, n),
        _ => return Err(implausible()),
    };
    let mut bytes = vec![0u8; count * 8];
    reader.read_exact(&mut bytes).map_err(|e| GpecError::Load {
        what: "matrix".into(),
        reason: format!("expected {count} values: {e}"),
    })?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(GpecError::Load {
            what: "matrix".into(),
            reason: "trailing bytes after matrix data".into(),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_matrix(matrix: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_matrix(matrix, BufWriter::new(File::create(path)?))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(BufReader::new(File::open(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSidecar {
    pub points: usize,
    pub k: usize,
    pub method: ShortestPathMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramSidecar {
    pub rows: usize,
    pub cols: usize,
    pub kernel: String,
    pub lambda: f64,
    pub rho: Option<f64>,
    pub jitter: f64,
    /// Hex digest of the boundary CSV the kernel was built from.
    pub boundary_hash: Option<String>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// File names used by [`save_geodesic_index`] inside a directory.
pub struct GeodesicFiles {
    pub boundary: PathBuf,
    pub distances: PathBuf,
    pub sidecar: PathBuf,
}

impl GeodesicFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            boundary: dir.join("boundary.csv"),
            distances: dir.join("geodesic.bin"),
            sidecar: dir.join("geodesic.json"),
        }
    }
}

pub fn save_geodesic_index(index: &GeodesicIndex, dir: &Path) -> Result<GeodesicFiles> {
    std::fs::create_dir_all(dir)?;
    let files = GeodesicFiles::in_dir(dir);
    index
        .boundary
        .write_csv(BufWriter::new(File::create(&files.boundary)?))?;
    save_matrix(&index.dist, &files.distances)?;
    write_json(
        &GeodesicSidecar {
            points: index.len(),
            k: index.k,
            method: index.method,
        },
        &files.sidecar,
    )?;
    Ok(files)
}

/// Reloads a saved index. The kNN edge lists are not persisted and come back empty.
pub fn load_geodesic_index(dir: &Path) -> Result<GeodesicIndex> {
    let files = GeodesicFiles::in_dir(dir);
    let sidecar: GeodesicSidecar = read_json(&files.sidecar)?;
    let boundary = BoundarySet::read_csv(BufReader::new(File::open(&files.boundary)?), "reloaded")?;
    if boundary.len() != sidecar.points {
        return Err(GpecError::Load {
            what: "geodesic index".into(),
            reason: format!(
                "sidecar says {} points, boundary has {}",
                sidecar.points,
                boundary.len()
            ),
        });
    }
    let dist = load_matrix(&files.distances)?;
    let mut index = GeodesicIndex::from_distances(boundary, sidecar.k, dist)?;
    index.method = sidecar.method;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::build_index;

    #[test]
    fn matrix_roundtrip_bitwise() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::INFINITY, 1e-308, 3.5, f64::MIN_POSITIVE]);
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 8);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        let back = read_matrix(buf.as_slice()).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let mut buf = Vec::new();
        write_matrix(&DMatrix::from_element(2, 2, 1.0), &mut buf).unwrap();
        assert!(read_matrix(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_matrix(buf.as_slice()).is_err());
    }

    #[test]
    fn geodesic_index_roundtrip() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1, (i as f64 * 0.3).sin()]).collect();
        let idx = build_index(BoundarySet::from_points(pts, "t").unwrap(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_geodesic_index(&idx, dir.path()).unwrap();
        let back = load_geodesic_index(dir.path()).unwrap();
        assert_eq!(back.k, 3);
        assert_eq!(back.points(), idx.points());
        assert_eq!(back.dist, idx.dist);
    }
}
