use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sigmoid, BlackBoxModel};
use crate::error::{GpecError, Result};

/// Flat-array tree node. Internal nodes carry `feature`, `threshold`, `left`
/// and `right`; leaves carry only `value`. Samples with
/// `x[feature] < threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(default)]
    pub value: f64,
}

/// Sum of axis-aligned regression trees pushed through a logistic link.
#[derive(Clone, Debug)]
pub struct TreeEnsembleModel {
    dim: usize,
    trees: Vec<Vec<TreeNode>>,
}

impl TreeEnsembleModel {
    /// Children must point strictly forward in the node array, so every
    /// evaluation path terminates at a leaf.
    pub fn new(dim: usize, trees: Vec<Vec<TreeNode>>) -> Result<Self> {
        if trees.is_empty() {
            return Err(load_err("tree ensemble", "no trees"));
        }
        for (t, nodes) in trees.iter().enumerate() {
            if nodes.is_empty() {
                return Err(load_err(&format!("tree {t}"), "no nodes"));
            }
            for (i, node) in nodes.iter().enumerate() {
                let at = format!("tree {t} node {i}");
                match (node.feature, node.threshold, node.left, node.right) {
                    (None, None, None, None) => {
                        if !node.value.is_finite() {
                            return Err(load_err(&at, "non-finite leaf value"));
                        }
                    }
                    (Some(f), Some(th), Some(l), Some(r)) => {
                        if f >= dim {
                            return Err(load_err(&at, &format!("feature {f} >= dim {dim}")));
                        }
                        if !th.is_finite() {
                            return Err(load_err(&at, "non-finite threshold"));
                        }
                        for c in [l, r] {
                            if c <= i || c >= nodes.len() {
                                return Err(load_err(&at, &format!("child {c} must lie in ({i}, {})", nodes.len())));
                            }
                        }
                    }
                    _ => {
                        return Err(load_err(
                            &at,
                            "internal nodes need feature, threshold, left and right; leaves need none",
                        ))
                    }
                }
            }
        }
        Ok(Self { dim, trees })
    }

    pub fn from_json_str(text: &str, dim: usize) -> Result<Self> {
        let trees: Vec<Vec<TreeNode>> =
            serde_json::from_str(text).map_err(|e| load_err("tree file", &e.to_string()))?;
        Self::new(dim, trees)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| load_err(&path.display().to_string(), &e.to_string()))?;
        Self::from_json_str(&text, dim)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.trees).expect("trees serialize")
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    /// Sum of leaf scores.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.trees
            .iter()
            .map(|nodes| {
                let mut i = 0;
                loop {
                    let node = &nodes[i];
                    match (node.feature, node.threshold, node.left, node.right) {
                        (Some(f), Some(th), Some(l), Some(r)) => {
                            i = if x[f] < th { l } else { r };
                        }
                        _ => break node.value,
                    }
                }
            })
            .sum()
    }
}

fn load_err(what: &str, reason: &str) -> GpecError {
    GpecError::Load {
        what: what.to_string(),
        reason: reason.to_string(),
    }
}

impl BlackBoxModel for TreeEnsembleModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }

    fn label(&self) -> String {
        format!("tree ensemble ({} trees)", self.trees.len())
    }
}
