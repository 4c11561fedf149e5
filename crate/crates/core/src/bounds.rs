use serde::{Deserialize, Serialize};

use crate::error::{GpecError, Result};

/// Axis-aligned box `[low_i, high_i]` in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let b = Self { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.is_empty() || self.low.len() != self.high.len() {
            return Err(GpecError::Config(format!(
                "box bounds have mismatched or empty dimensions ({} vs {})",
                self.low.len(),
                self.high.len()
            )));
        }
        for (i, (lo, hi)) in self.low.iter().zip(&self.high).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(GpecError::Config(format!(
                    "box axis {i}: need finite low < high, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Coordinate `j` of `resolution` evenly spaced values along `axis`, endpoints included.
    pub fn grid_coord(&self, axis: usize, j: usize, resolution: usize) -> f64 {
        let (lo, hi) = (self.low[axis], self.high[axis]);
        if resolution < 2 {
            return 0.5 * (lo + hi);
        }
        lo + (hi - lo) * j as f64 / (resolution - 1) as f64
    }

    /// All grid nodes, row-major with the last axis varying fastest.
    pub fn grid(&self, resolution: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let total = resolution.pow(d as u32);
        (0..total)
            .map(|flat| {
                let idx = unflatten(flat, resolution, d);
                idx.iter()
                    .enumerate()
                    .map(|(axis, &j)| self.grid_coord(axis, j, resolution))
                    .collect()
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

/// Multi-index of `flat` in a `resolution^d` grid, last axis fastest.
pub(crate) fn unflatten(mut flat: usize, resolution: usize, d: usize) -> Vec<usize> {
    let mut idx = vec![0; d];
    for axis in (0..d).rev() {
        idx[axis] = flat % resolution;
        flat /= resolution;
    }
    idx
}

pub(crate) fn flatten(idx: &[usize], resolution: usize) -> usize {
    idx.iter().fold(0, |acc, &j| acc * resolution + j)
}
