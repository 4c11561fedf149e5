//! Shapley-value feature attributions and their estimation noise.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpecError, Result};
use crate::linalg::checked_cholesky;
use crate::models::BlackBoxModel;

/// Ridge penalty used when the kernel-SHAP normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// One explanation: attributions `e` for input `x`, with per-feature noise
/// variance (the inverse precision consumed by the GP).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub noise_var: Vec<f64>,
    pub explainer_id: String,
    pub seed: u64,
}

impl ExplanationRecord {
    pub fn validate(&self) -> Result<()> {
        let d = self.x.len();
        if self.e.len() != d || self.noise_var.len() != d {
            return Err(GpecError::Parameter(format!(
                "explanation dimensions disagree: x={}, e={}, var={}",
                d,
                self.e.len(),
                self.noise_var.len()
            )));
        }
        if self.e.iter().chain(&self.x).any(|v| !v.is_finite()) {
            return Err(GpecError::Parameter("explanation has non-finite entries".into()));
        }
        if self.noise_var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GpecError::Parameter("noise variances must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Values that replace "removed" features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSpec {
    /// A single reference point.
    Reference(Vec<f64>),
    /// Background rows; removed features take each row's value in turn and
    /// the model output is averaged.
    Background(Vec<Vec<f64>>),
}

impl BaselineSpec {
    pub fn dim(&self) -> usize {
        match self {
            BaselineSpec::Reference(r) => r.len(),
            BaselineSpec::Background(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            BaselineSpec::Reference(r) => r.len() == dim,
            BaselineSpec::Background(rows) => !rows.is_empty() && rows.iter().all(|r| r.len() == dim),
        };
        if ok {
            Ok(())
        } else {
            Err(GpecError::Parameter(format!(
                "baseline does not match model dimension {dim}"
            )))
        }
    }
}

/// Coalition value `v(S)`: model output with features outside `present`
/// replaced by the baseline.
pub fn coalition_value(model: &dyn BlackBoxModel, x: &[f64], baseline: &BaselineSpec, present: &[bool]) -> f64 {
    let mix = |fill: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(fill)
            .zip(present)
            .map(|((xi, bi), keep)| if *keep { *xi } else { *bi })
            .collect()
    };
    match baseline {
        BaselineSpec::Reference(r) => model.predict(&mix(r)),
        BaselineSpec::Background(rows) => rows.iter().map(|r| model.predict(&mix(r))).sum::<f64>() / rows.len() as f64,
    }
}

fn check_inputs(model: &dyn BlackBoxModel, x: &[f64], baseline: &BaselineSpec) -> Result<()> {
    if x.len() != model.dim() {
        return Err(GpecError::Parameter(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.dim()
        )));
    }
    baseline.validate(model.dim())
}

fn permutation_average<I>(d: usize, perms: I, mut value: impl FnMut(&[bool]) -> f64, empty: f64) -> Vec<f64>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    let mut totals = vec![0.0; d];
    let mut count = 0usize;
    let mut present = vec![false; d];
    for perm in perms {
        present.iter_mut().for_each(|p| *p = false);
        let mut prev = empty;
        for &i in &perm {
            present[i] = true;
            let next = value(&present);
            totals[i] += next - prev;
            prev = next;
        }
        count += 1;
    }
    totals.iter().map(|t| t / count as f64).collect()
}

/// Shapley sampling values: average marginal contribution over random
/// feature orderings.
pub fn shapley_sampling(
    model: &dyn BlackBoxModel,
    x: &[f64],
    baseline: &BaselineSpec,
    num_permutations: usize,
    seed: u64,
) -> Result<ExplanationRecord> {
    check_inputs(model, x, baseline)?;
    if num_permutations == 0 {
        return Err(GpecError::Parameter("need at least one permutation".into()));
    }
    let d = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..num_permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..d).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let empty = coalition_value(model, x, baseline, &vec![false; d]);
    let e = permutation_average(d, perms, |s| coalition_value(model, x, baseline, s), empty);
    Ok(ExplanationRecord {
        x: x.to_vec(),
        e,
        noise_var: vec![0.0; d],
        explainer_id: format!("shapley_sampling(p={num_permutations})"),
        seed,
    })
}

/// Shapley values from every one of the `d!` orderings (coalition values are cached).
pub fn shapley_exhaustive(model: &dyn BlackBoxModel, x: &[f64], baseline: &BaselineSpec) -> Result<ExplanationRecord> {
    check_inputs(model, x, baseline)?;
    let d = x.len();
    if d > 10 {
        return Err(GpecError::Parameter(format!(
            "exhaustive Shapley enumeration is limited to 10 features, got {d}"
        )));
    }
    let table: Vec<f64> = (0..1usize << d)
        .map(|mask| coalition_value(model, x, baseline, &mask_to_present(mask, d)))
        .collect();
    let e = permutation_average(d, all_permutations(d), |s| table[present_to_mask(s)], table[0]);
    Ok(ExplanationRecord {
        x: x.to_vec(),
        e,
        noise_var: vec![0.0; d],
        explainer_id: "shapley_exhaustive".into(),
        seed: 0,
    })
}

/// All permutations of `0..d` in lexicographic order.
fn all_permutations(d: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..d).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..d).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..d).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

fn mask_to_present(mask: usize, d: usize) -> Vec<bool> {
    (0..d).map(|i| mask >> i & 1 == 1).collect()
}

fn present_to_mask(present: &[bool]) -> usize {
    present
        .iter()
        .enumerate()
        .filter(|(_, p)| **p)
        .map(|(i, _)| 1 << i)
        .sum()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kernel SHAP: Shapley-kernel weighted least squares over coalitions with
/// the empty and full coalitions pinned by an efficiency constraint.
///
/// `num_coalitions` counts the two pinned coalitions. When it reaches `2^d`
/// every coalition is enumerated with exact kernel weights and the result is
/// exact. Otherwise `num_coalitions - 2` coalitions are drawn in
/// complementary pairs with sizes sampled in proportion to their total
/// kernel weight.
pub fn kernel_shap(
    model: &dyn BlackBoxModel,
    x: &[f64],
    baseline: &BaselineSpec,
    num_coalitions: usize,
    seed: u64,
) -> Result<ExplanationRecord> {
    check_inputs(model, x, baseline)?;
    let d = x.len();
    if num_coalitions < d + 2 {
        return Err(GpecError::Parameter(format!(
            "kernel SHAP needs at least d + 2 = {} coalitions, got {num_coalitions}",
            d + 2
        )));
    }
    let empty = coalition_value(model, x, baseline, &vec![false; d]);
    let full = coalition_value(model, x, baseline, &vec![true; d]);
    let total = full - empty;
    let mut explainer_id = format!("kernel_shap(c={num_coalitions})");
    if d == 1 {
        return Ok(ExplanationRecord {
            x: x.to_vec(),
            e: vec![total],
            noise_var: vec![0.0],
            explainer_id,
            seed,
        });
    }

    let coalitions = coalition_design(d, num_coalitions - 2, seed);
    let rows = coalitions.len();
    // eliminate the last attribution via sum(e) = total
    let mut design = DMatrix::zeros(rows, d - 1);
    let mut target = DVector::zeros(rows);
    let mut weight = DVector::zeros(rows);
    for (r, (present, w)) in coalitions.iter().enumerate() {
        let last = if present[d - 1] { 1.0 } else { 0.0 };
        for i in 0..d - 1 {
            design[(r, i)] = if present[i] { 1.0 } else { 0.0 } - last;
        }
        target[r] = coalition_value(model, x, baseline, present) - empty - last * total;
        weight[r] = *w;
    }
    let mut weighted = design.clone();
    for r in 0..rows {
        weighted.row_mut(r).scale_mut(weight[r]);
    }
    let normal = design.transpose() * &weighted;
    let rhs = weighted.transpose() * &target;
    let solution = match checked_cholesky(&normal) {
        Some(chol) => chol.solve(&rhs),
        None => {
            let mut ridge = normal.clone();
            for i in 0..d - 1 {
                ridge[(i, i)] += RIDGE_FALLBACK;
            }
            explainer_id.push_str("+ridge");
            ridge
                .lu()
                .solve(&rhs)
                .ok_or_else(|| GpecError::Numerical("kernel SHAP system is singular even with ridge".into()))?
        }
    };
    let mut e: Vec<f64> = solution.iter().copied().collect();
    let last = total - e.iter().sum::<f64>();
    e.push(last);
    Ok(ExplanationRecord {
        x: x.to_vec(),
        e,
        noise_var: vec![0.0; d],
        explainer_id,
        seed,
    })
}

/// `(present mask, regression weight)` rows for kernel SHAP.
fn coalition_design(d: usize, num_proper: usize, seed: u64) -> Vec<(Vec<bool>, f64)> {
    if enumerates_all(d, num_proper + 2) {
        return (1..(1usize << d) - 1)
            .map(|mask| {
                let present = mask_to_present(mask, d);
                let s = present.iter().filter(|p| **p).count();
                let w = (d - 1) as f64 / (binomial(d, s) * (s * (d - s)) as f64);
                (present, w)
            })
            .collect();
    }
    let size_weights: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
    let norm: f64 = size_weights.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(num_proper);
    while out.len() < num_proper {
        let mut u = rng.gen::<f64>() * norm;
        let mut size = d - 1;
        for (k, w) in size_weights.iter().enumerate() {
            if u < *w {
                size = k + 1;
                break;
            }
            u -= w;
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut rng);
        let mut present = vec![false; d];
        for &i in &order[..size] {
            present[i] = true;
        }
        let complement: Vec<bool> = present.iter().map(|p| !p).collect();
        out.push((present, 1.0));
        if out.len() < num_proper {
            out.push((complement, 1.0));
        }
    }
    out
}

fn enumerates_all(d: usize, num_coalitions: usize) -> bool {
    d < usize::BITS as usize && num_coalitions >= 1usize << d
}

/// Which attribution routine to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    ShapleySampling { permutations: usize },
    ShapleyExhaustive,
    KernelShap { coalitions: usize },
}

/// Anything that can produce an explanation for `x` from a seed.
pub trait Explainer: Send + Sync {
    fn explain(&self, x: &[f64], seed: u64) -> Result<ExplanationRecord>;
    fn is_stochastic(&self) -> bool;
}

/// A model, a removal baseline and an attribution method.
pub struct AttributionExplainer<'a> {
    pub model: &'a dyn BlackBoxModel,
    pub baseline: &'a BaselineSpec,
    pub method: Method,
}

impl Explainer for AttributionExplainer<'_> {
    fn explain(&self, x: &[f64], seed: u64) -> Result<ExplanationRecord> {
        match self.method {
            Method::ShapleySampling { permutations } => {
                shapley_sampling(self.model, x, self.baseline, permutations, seed)
            }
            Method::ShapleyExhaustive => shapley_exhaustive(self.model, x, self.baseline),
            Method::KernelShap { coalitions } => kernel_shap(self.model, x, self.baseline, coalitions, seed),
        }
    }

    fn is_stochastic(&self) -> bool {
        match self.method {
            Method::ShapleySampling { .. } => true,
            Method::ShapleyExhaustive => false,
            Method::KernelShap { coalitions } => {
                let d = self.model.dim();
                d > 1 && !enumerates_all(d, coalitions)
            }
        }
    }
}

/// Derives an independent stream seed for item `index` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser over the combined key
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-feature variance of `resamples` independent explanations of `x`,
/// with the population normalisation `1/K`. Deterministic explainers are
/// noiseless and return zeros.
pub fn estimate_tau(explainer: &dyn Explainer, x: &[f64], resamples: usize, seed: u64) -> Result<Vec<f64>> {
    if !explainer.is_stochastic() {
        return Ok(vec![0.0; x.len()]);
    }
    if resamples < 2 {
        return Err(GpecError::Parameter(format!(
            "need at least 2 resamples to estimate explanation variance, got {resamples}"
        )));
    }
    let draws: Vec<Vec<f64>> = (0..resamples)
        .map(|i| explainer.explain(x, derive_seed(seed, i as u64)).map(|r| r.e))
        .collect::<Result<_>>()?;
    let k = resamples as f64;
    let d = draws[0].len();
    Ok((0..d)
        .map(|f| {
            let mean = draws.iter().map(|e| e[f]).sum::<f64>() / k;
            draws.iter().map(|e| (e[f] - mean).powi(2)).sum::<f64>() / k
        })
        .collect())
}

/// Replaces a record's noise with externally supplied variances.
pub fn external_variance(record: &ExplanationRecord, variances: &[f64]) -> Result<ExplanationRecord> {
    if variances.len() != record.e.len() {
        return Err(GpecError::Parameter(format!(
            "got {} variances for {} features",
            variances.len(),
            record.e.len()
        )));
    }
    if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(GpecError::Parameter(format!("variance must be >= 0, got {v}")));
    }
    let mut out = record.clone();
    out.noise_var = variances.to_vec();
    if variances.iter().any(|v| *v > 0.0) {
        out.explainer_id = format!("{}+external_var", record.explainer_id);
    }
    Ok(out)
}

/// Columns `x_1..x_d,e_1..e_d,var_1..var_d,explainer_id,seed`.
pub fn write_explanations_csv<W: Write>(records: &[ExplanationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = records.first().map_or(0, |r| r.x.len());
    let mut header: Vec<String> = Vec::new();
    for prefix in ["x", "e", "var"] {
        header.extend((1..=d).map(|i| format!("{prefix}_{i}")));
    }
    header.push("explainer_id".into());
    header.push("seed".into());
    w.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.x.iter().chain(&r.e).chain(&r.noise_var).map(f64::to_string).collect();
        row.push(r.explainer_id.clone());
        row.push(r.seed.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_explanations_csv<R: Read>(reader: R) -> Result<Vec<ExplanationRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let width = r.headers()?.len();
    if width < 5 || (width - 2) % 3 != 0 {
        return Err(GpecError::Load {
            what: "explanations csv".into(),
            reason: format!("unexpected column count {width}"),
        });
    }
    let d = (width - 2) / 3;
    let bad = |line: usize, e: &dyn std::fmt::Display| GpecError::Load {
        what: "explanations csv".into(),
        reason: format!("row {}: {e}", line + 1),
    };
    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let nums: Vec<f64> = record
            .iter()
            .take(3 * d)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(line, &e))?;
        let seed = record[3 * d + 1].trim().parse::<u64>().map_err(|e| bad(line, &e))?;
        let rec = ExplanationRecord {
            x: nums[..d].to_vec(),
            e: nums[d..2 * d].to_vec(),
            noise_var: nums[2 * d..].to_vec(),
            explainer_id: record[3 * d].to_string(),
            seed,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}
