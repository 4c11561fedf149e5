//! Uncertainty estimates for feature-attribution explanations.
//!
//! A Gaussian process is fit over explanations, with a kernel that measures
//! similarity through geodesic distances along the classifier's decision
//! boundary. The posterior predictive 95% interval combines two sources of
//! uncertainty: decision-boundary complexity near a sample (through the
//! kernel) and the explainer's own estimation noise (through per-sample
//! diagonal noise).
//!
//! Pipeline: [`boundary`] samples the decision boundary, [`geodesic`] builds
//! the kNN graph and its shortest paths, [`wegkernel`] turns those into the
//! weighted exponential geodesic kernel, [`explainers`] produce Shapley
//! attributions and their variances, and [`gp`] fits the regression.

pub mod boundary;
pub mod bounds;
pub mod error;
pub mod explainers;
pub mod geodesic;
pub mod gp;
pub mod io;
pub mod linalg;
pub mod models;
mod parallel;
pub mod wegkernel;

pub use bounds::Bounds;
pub use error::{GpecError, Result};
