//! Geodesic distances along a sampled decision boundary.
//!
//! The boundary sample is connected into a symmetric k-nearest-neighbour
//! graph with Euclidean edge lengths; shortest-path lengths on that graph
//! approximate geodesic distances on the boundary manifold (as in ISOMAP).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::boundary::{distance, BoundarySet};
use crate::error::{GpecError, Result};
use crate::linalg::{min_eigenvalue, PSD_TOLERANCE};
use crate::parallel::map_indexed;

/// Above this many points, all-pairs shortest paths use per-source Dijkstra.
pub const FLOYD_WARSHALL_MAX: usize = 512;

pub const DEFAULT_LAMBDA: f64 = 1.0;

pub fn default_k(points: usize) -> usize {
    10.min(points.saturating_sub(1)).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShortestPathMethod {
    FloydWarshall,
    Dijkstra,
}

#[derive(Clone, Debug)]
pub struct GeodesicIndex {
    pub boundary: BoundarySet,
    pub k: usize,
    /// Adjacency lists `(neighbour, edge length)`, symmetric.
    pub edges: Vec<Vec<(usize, f64)>>,
    /// Shortest-path lengths; `+inf` between disconnected components.
    pub dist: DMatrix<f64>,
    pub method: ShortestPathMethod,
}

pub fn build_index(boundary: BoundarySet, k: usize) -> Result<GeodesicIndex> {
    let method = if boundary.len() <= FLOYD_WARSHALL_MAX {
        ShortestPathMethod::FloydWarshall
    } else {
        ShortestPathMethod::Dijkstra
    };
    build_index_with(boundary, k, method)
}

pub fn build_index_with(boundary: BoundarySet, k: usize, method: ShortestPathMethod) -> Result<GeodesicIndex> {
    let m = boundary.len();
    if m < 2 {
        return Err(GpecError::InsufficientPoints(m));
    }
    if k == 0 || k >= m {
        return Err(GpecError::Parameter(format!(
            "neighbour count k must satisfy 1 <= k < {m}, got {k}"
        )));
    }
    let edges = knn_graph(&boundary.points, k);
    let mut dist = match method {
        ShortestPathMethod::FloydWarshall => floyd_warshall(&edges),
        ShortestPathMethod::Dijkstra => {
            let rows = map_indexed(m, |s| dijkstra(&edges, s));
            DMatrix::from_fn(m, m, |i, j| rows[i][j])
        }
    };
    for i in 0..m {
        dist[(i, i)] = 0.0;
        for j in (i + 1)..m {
            let v = dist[(i, j)].min(dist[(j, i)]);
            dist[(i, j)] = v;
            dist[(j, i)] = v;
        }
    }
    Ok(GeodesicIndex {
        boundary,
        k,
        edges,
        dist,
        method,
    })
}

/// Edge `i -- j` exists when either endpoint is among the other's `k` nearest.
fn knn_graph(points: &[Vec<f64>], k: usize) -> Vec<Vec<(usize, f64)>> {
    let m = points.len();
    let nearest = map_indexed(m, |i| {
        let mut cand: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| (distance(&points[i], &points[j]), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand
    });
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (i, list) in nearest.iter().enumerate() {
        for &(d, j) in list {
            edges[i].push((j, d));
            edges[j].push((i, d));
        }
    }
    for list in &mut edges {
        list.sort_by_key(|a| a.0);
        list.dedup_by(|a, b| a.0 == b.0);
    }
    edges
}

fn floyd_warshall(edges: &[Vec<(usize, f64)>]) -> DMatrix<f64> {
    let m = edges.len();
    // row-major scratch for cache-friendly inner loops
    let mut d = vec![f64::INFINITY; m * m];
    for (i, list) in edges.iter().enumerate() {
        d[i * m + i] = 0.0;
        for &(j, w) in list {
            d[i * m + j] = d[i * m + j].min(w);
        }
    }
    for via in 0..m {
        let through: Vec<f64> = d[via * m..(via + 1) * m].to_vec();
        for i in 0..m {
            let dik = d[i * m + via];
            if dik.is_infinite() {
                continue;
            }
            let row = &mut d[i * m..(i + 1) * m];
            for (dij, dkj) in row.iter_mut().zip(&through) {
                let cand = dik + dkj;
                if cand < *dij {
                    *dij = cand;
                }
            }
        }
    }
    DMatrix::from_fn(m, m, |i, j| d[i * m + j])
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(edges: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; edges.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier(0.0, source));
    while let Some(Frontier(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &edges[u] {
            let cand = d + w;
            if cand < dist[v] {
                dist[v] = cand;
                heap.push(Frontier(cand, v));
            }
        }
    }
    dist
}

impl GeodesicIndex {
    /// Wraps precomputed distances (e.g. reloaded from disk). Accepts `M >= 1`.
    pub fn from_distances(boundary: BoundarySet, k: usize, dist: DMatrix<f64>) -> Result<Self> {
        let m = boundary.len();
        if m == 0 {
            return Err(GpecError::InsufficientPoints(0));
        }
        if dist.nrows() != m || dist.ncols() != m {
            return Err(GpecError::Load {
                what: "geodesic distances".into(),
                reason: format!("expected {m}x{m}, got {}x{}", dist.nrows(), dist.ncols()),
            });
        }
        for i in 0..m {
            if dist[(i, i)] != 0.0 {
                return Err(GpecError::Load {
                    what: "geodesic distances".into(),
                    reason: format!("non-zero diagonal at {i}"),
                });
            }
            for j in 0..i {
                if dist[(i, j)] != dist[(j, i)] || dist[(i, j)].is_nan() || dist[(i, j)] < 0.0 {
                    return Err(GpecError::Load {
                        what: "geodesic distances".into(),
                        reason: format!("entry ({i}, {j}) is not a symmetric non-negative distance"),
                    });
                }
            }
        }
        Ok(Self {
            boundary,
            k,
            edges: vec![Vec::new(); m],
            dist,
            method: ShortestPathMethod::FloydWarshall,
        })
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.boundary.points
    }

    pub fn is_connected(&self) -> bool {
        self.dist.iter().all(|v| v.is_finite())
    }
}

/// Exponential geodesic Gram matrix over the boundary sample.
#[derive(Debug)]
pub struct EgGram {
    pub lambda: f64,
    pub matrix: DMatrix<f64>,
    min_eig: OnceLock<f64>,
}

impl EgGram {
    /// Smallest eigenvalue, computed on first use.
    pub fn min_eigenvalue(&self) -> f64 {
        *self.min_eig.get_or_init(|| min_eigenvalue(&self.matrix))
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= PSD_TOLERANCE
    }
}

/// `exp(-lambda * d_geo)`; infinite distance maps to 0.
pub fn eg_kernel(index: &GeodesicIndex, lambda: f64) -> Result<EgGram> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(GpecError::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let m = index.len();
    let matrix = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            let d = index.dist[(i, j)];
            if d.is_infinite() {
                0.0
            } else {
                (-lambda * d).exp()
            }
        }
    });
    Ok(EgGram {
        lambda,
        matrix,
        min_eig: OnceLock::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCheck {
    pub lambda: f64,
    pub min_eigenvalue: f64,
    pub is_psd: bool,
}

/// Minimum eigenvalue of the EG Gram matrix for each candidate bandwidth.
/// Non-PSD candidates are flagged, not rejected.
pub fn validate_lambda(index: &GeodesicIndex, candidates: &[f64]) -> Result<Vec<LambdaCheck>> {
    if candidates.is_empty() {
        return Err(GpecError::Parameter("no lambda candidates given".into()));
    }
    candidates
        .iter()
        .map(|&lambda| {
            let eg = eg_kernel(index, lambda)?;
            let min_eigenvalue = eg.min_eigenvalue();
            Ok(LambdaCheck {
                lambda,
                min_eigenvalue,
                is_psd: min_eigenvalue >= PSD_TOLERANCE,
            })
        })
        .collect()
}

/// Candidates that passed the PSD check, in input order.
pub fn psd_lambdas(checks: &[LambdaCheck]) -> Vec<f64> {
    checks.iter().filter(|c| c.is_psd).map(|c| c.lambda).collect()
}
