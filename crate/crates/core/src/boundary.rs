//! Sampling points on the decision boundary `{x : predict(x) = 1/2}`.
//!
//! Pairs of points on opposite sides of the boundary are generated (from a
//! regular grid, or from projected-gradient attacks on training points) and
//! each segment is bisected until the prediction is within tolerance of 1/2.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::{flatten, unflatten, Bounds};
use crate::error::{GpecError, Result};
use crate::models::BlackBoxModel;
use crate::parallel::map_indexed;

/// Points closer than this are considered duplicates.
pub const DEDUP_RADIUS: f64 = 1e-9;

/// Attack radii tried in order; the first success wins.
pub const EPSILON_SCHEDULE: [f64; 14] = [
    0.0, 2e-4, 5e-4, 8e-4, 1e-3, 1e-3, 1.5e-3, 2e-3, 3e-3, 1e-2, 1e-1, 3e-1, 5e-1, 1.0,
];

pub const PGD_STEPS: usize = 40;

/// Sampled boundary points with their residuals `|predict(m) - 1/2|`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySet {
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub source_model: String,
    pub tolerance: f64,
}

/// `predict(a) >= 1/2 > predict(b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchParams {
    /// Stop once `|predict(m) - 1/2| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Also stop once the bracketing segment is shorter than this. Zero disables it.
    pub position_tol: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 60,
            position_tol: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub point: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn straddles(model: &dyn BlackBoxModel, pair: &CrossingPair) -> bool {
    model.predict(&pair.a) >= 0.5 && model.predict(&pair.b) < 0.5
}

pub fn binary_search_boundary(
    model: &dyn BlackBoxModel,
    pair: &CrossingPair,
    params: SearchParams,
) -> Result<SearchOutcome> {
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(GpecError::Parameter(format!(
            "binary search tolerance must be non-negative, got {}",
            params.tol
        )));
    }
    let (pa, pb) = (model.predict(&pair.a), model.predict(&pair.b));
    if !(pa >= 0.5 && pb < 0.5) {
        return Err(GpecError::RejectedPair { pa, pb });
    }
    let mut hi = pair.a.clone();
    let mut lo = pair.b.clone();
    let mut mid = midpoint(&hi, &lo);
    let mut residual = (pa - 0.5).abs().min((pb - 0.5).abs());
    for iter in 1..=params.max_iter {
        mid = midpoint(&hi, &lo);
        let p = model.predict(&mid);
        residual = (p - 0.5).abs();
        if residual <= params.tol {
            return Ok(SearchOutcome {
                point: mid,
                residual,
                iterations: iter,
                converged: true,
            });
        }
        if p >= 0.5 {
            hi.clone_from(&mid);
        } else {
            lo.clone_from(&mid);
        }
        if params.position_tol > 0.0 && distance(&hi, &lo) <= params.position_tol {
            return Ok(SearchOutcome {
                point: mid,
                residual,
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(SearchOutcome {
        point: mid,
        residual,
        iterations: params.max_iter,
        converged: false,
    })
}

/// Every axis-adjacent edge of the `resolution^d` grid whose endpoints
/// straddle 1/2, oriented so that `a` is the positive side.
pub fn grid_pairs(model: &dyn BlackBoxModel, bounds: &Bounds, resolution: usize) -> Result<Vec<CrossingPair>> {
    bounds.validate()?;
    if resolution < 2 {
        return Err(GpecError::Parameter(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    if bounds.dim() != model.dim() {
        return Err(GpecError::Config(format!(
            "box has {} axes but model expects {} inputs",
            bounds.dim(),
            model.dim()
        )));
    }
    let d = bounds.dim();
    let nodes = bounds.grid(resolution);
    let positive: Vec<bool> = map_indexed(nodes.len(), |i| model.predict(&nodes[i]) >= 0.5);

    let mut pairs = Vec::new();
    for flat in 0..nodes.len() {
        let idx = unflatten(flat, resolution, d);
        for axis in 0..d {
            if idx[axis] + 1 >= resolution {
                continue;
            }
            let mut next = idx.clone();
            next[axis] += 1;
            let other = flatten(&next, resolution);
            match (positive[flat], positive[other]) {
                (true, false) => pairs.push(CrossingPair {
                    a: nodes[flat].clone(),
                    b: nodes[other].clone(),
                }),
                (false, true) => pairs.push(CrossingPair {
                    a: nodes[other].clone(),
                    b: nodes[flat].clone(),
                }),
                _ => {}
            }
        }
    }
    Ok(pairs)
}

/// Settings for attack-assisted pair generation.
#[derive(Clone, Debug)]
pub struct AttackParams {
    /// Training points with the model's predicted class.
    pub train_points: Vec<(Vec<f64>, usize)>,
    /// Class whose one-vs-all boundary is being sampled.
    pub target_class: usize,
    /// Number of points drawn per class (`counts[v]` for class `v`).
    pub counts: Vec<usize>,
    pub seed: u64,
    /// Optional per-coordinate clipping range (e.g. pixel intensities).
    pub clip: Option<(f64, f64)>,
}

/// Projected-gradient (l-infinity, sign steps) attacks on training points.
///
/// `model` must be the one-vs-all view of the target class. Points of the
/// target class are pushed across the boundary (untargeted); points of other
/// classes are pulled toward the target class (targeted). For each input the
/// smallest radius in [`EPSILON_SCHEDULE`] that succeeds is kept.
pub fn attack_pairs(model: &dyn BlackBoxModel, params: &AttackParams) -> Result<Vec<CrossingPair>> {
    let probe = params
        .train_points
        .first()
        .map(|(x, _)| x.clone())
        .ok_or_else(|| GpecError::Parameter("attack needs at least one training point".into()))?;
    if model.gradient(&probe).is_none() {
        return Err(GpecError::UnsupportedModel(format!(
            "'{}' has no gradient; attack-based sampling needs a differentiable model",
            model.label()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut selected: Vec<(&Vec<f64>, usize)> = Vec::new();
    for (class, &count) in params.counts.iter().enumerate() {
        let mut members: Vec<&Vec<f64>> = params
            .train_points
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(x, _)| x)
            .collect();
        members.shuffle(&mut rng);
        selected.extend(members.into_iter().take(count).map(|x| (x, class)));
    }

    let attacked = map_indexed(selected.len(), |i| {
        let (x, class) = selected[i];
        let toward_positive = class != params.target_class;
        EPSILON_SCHEDULE
            .iter()
            .find_map(|&eps| {
                let adv = pgd_attack(model, x, eps, toward_positive, params.clip);
                let p = model.predict(&adv);
                let success = if toward_positive { p >= 0.5 } else { p < 0.5 };
                success.then_some(adv)
            })
            .map(|adv| (x.clone(), adv))
    });

    let mut pairs = Vec::new();
    for (x, adv) in attacked.into_iter().flatten() {
        let (px, pa) = (model.predict(&x), model.predict(&adv));
        let pair = if px >= 0.5 && pa < 0.5 {
            CrossingPair { a: x, b: adv }
        } else if pa >= 0.5 && px < 0.5 {
            CrossingPair { a: adv, b: x }
        } else {
            // degenerate: the input already satisfied the attack goal
            continue;
        };
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Sign-gradient PGD inside the l-infinity ball of radius `eps` around `x`.
fn pgd_attack(
    model: &dyn BlackBoxModel,
    x: &[f64],
    eps: f64,
    toward_positive: bool,
    clip: Option<(f64, f64)>,
) -> Vec<f64> {
    let mut adv = x.to_vec();
    if eps == 0.0 {
        return adv;
    }
    let step = eps / 10.0;
    let direction = if toward_positive { 1.0 } else { -1.0 };
    for _ in 0..PGD_STEPS {
        let Some(g) = model.gradient(&adv) else { break };
        for (i, v) in adv.iter_mut().enumerate() {
            *v += direction * step * sign(g[i]);
            *v = v.clamp(x[i] - eps, x[i] + eps);
            if let Some((lo, hi)) = clip {
                *v = v.clamp(lo, hi);
            }
        }
        let p = model.predict(&adv);
        if (toward_positive && p >= 0.5) || (!toward_positive && p < 0.5) {
            break;
        }
    }
    adv
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub enum SamplingStrategy {
    Grid { bounds: Bounds, resolution: usize },
    Attack(AttackParams),
}

/// Pair generation plus bisection, deduplicated.
///
/// Bisections that converge are kept. Bisections that exhaust `max_iter`
/// have bracketed a jump (piecewise-constant models) to within
/// `2^-max_iter` of the segment length and are kept too; the set's
/// tolerance is then widened to the largest such residual.
pub fn sample_boundary(
    model: &dyn BlackBoxModel,
    strategy: &SamplingStrategy,
    params: SearchParams,
) -> Result<BoundarySet> {
    let pairs = match strategy {
        SamplingStrategy::Grid { bounds, resolution } => {
            model.check_domain(bounds)?;
            grid_pairs(model, bounds, *resolution)?
        }
        SamplingStrategy::Attack(attack) => attack_pairs(model, attack)?,
    };
    boundary_from_pairs(model, &pairs, params)
}

pub fn boundary_from_pairs(
    model: &dyn BlackBoxModel,
    pairs: &[CrossingPair],
    params: SearchParams,
) -> Result<BoundarySet> {
    let outcomes = map_indexed(pairs.len(), |i| binary_search_boundary(model, &pairs[i], params));
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut residuals = Vec::new();
    for outcome in outcomes {
        let hit = match outcome {
            Ok(hit) => hit,
            Err(GpecError::RejectedPair { .. }) => continue,
            Err(e) => return Err(e),
        };
        if points.iter().any(|p| distance(p, &hit.point) <= DEDUP_RADIUS) {
            continue;
        }
        points.push(hit.point);
        residuals.push(hit.residual);
    }
    if points.is_empty() {
        return Err(GpecError::EmptyBoundary(model.label()));
    }
    let tolerance = residuals
        .iter()
        .copied()
        .fold(params.tol.max(f64::MIN_POSITIVE), f64::max);
    Ok(BoundarySet {
        points,
        residuals,
        source_model: model.label(),
        tolerance,
    })
}

impl BoundarySet {
    /// Builds a set from raw points (e.g. an analytic parameterisation).
    pub fn from_points(points: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(points.len());
        for p in points {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(GpecError::Parameter("boundary point is not finite".into()));
            }
            if !kept.iter().any(|q| distance(q, &p) <= DEDUP_RADIUS) {
                kept.push(p);
            }
        }
        let residuals = vec![0.0; kept.len()];
        Ok(Self {
            points: kept,
            residuals,
            source_model: source.into(),
            tolerance: f64::MIN_POSITIVE,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Columns `x_1..x_d,residual`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x_{i}")).collect();
        header.push("residual".into());
        w.write_record(&header)?;
        for (p, r) in self.points.iter().zip(&self.residuals) {
            let row: Vec<String> = p.iter().chain(std::iter::once(r)).map(f64::to_string).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, source: impl Into<String>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() < 2 || &headers[headers.len() - 1] != "residual" {
            return Err(GpecError::Load {
                what: "boundary csv".into(),
                reason: "expected columns x_1..x_d,residual".into(),
            });
        }
        let d = headers.len() - 1;
        let mut points = Vec::new();
        let mut residuals = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let values: Vec<f64> = record
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| GpecError::Load {
                    what: "boundary csv".into(),
                    reason: format!("row {}: {e}", line + 1),
                })?;
            residuals.push(values[d]);
            points.push(values[..d].to_vec());
        }
        if points.is_empty() {
            return Err(GpecError::EmptyBoundary("boundary csv".into()));
        }
        let tolerance = residuals.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        Ok(Self {
            points,
            residuals,
            source_model: source.into(),
            tolerance,
        })
    }
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
