use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sigmoid, BlackBoxModel, MulticlassModel};
use crate::error::{GpecError, Result};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// `softplus_beta(z) = ln(1 + exp(beta z)) / beta`; tends to relu as beta grows.
    Softplus(f64),
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Softplus(beta) => z.max(0.0) + (-(beta * z).abs()).exp().ln_1p() / beta,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus(beta) => sigmoid(beta * z),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::Softplus(beta) if !(beta.is_finite() && beta > 0.0) => {
                Err(GpecError::Config(format!("softplus beta must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// One affine layer; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MlpFile {
    layers: Vec<DenseLayer>,
    activation: Activation,
}

/// Fully connected network. Hidden layers use `activation`; the last layer is
/// linear and produces logits. With one output unit the model is binary with
/// `predict = sigmoid(logit)`; with several it is a multiclass model.
#[derive(Clone, Debug)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
    activation: Activation,
    label: String,
}

impl MlpModel {
    pub fn new(layers: Vec<DenseLayer>, activation: Activation) -> Result<Self> {
        activation.validate()?;
        if layers.is_empty() {
            return Err(load_err("network", "no layers"));
        }
        let mut fan_in: Option<usize> = None;
        for (l, layer) in layers.iter().enumerate() {
            let rows = layer.weight.len();
            if rows == 0 {
                return Err(load_err(&format!("layer {l}"), "empty weight matrix"));
            }
            let cols = layer.weight[0].len();
            if cols == 0 {
                return Err(load_err(&format!("layer {l}"), "weight has zero columns"));
            }
            if let Some(r) = layer.weight.iter().position(|row| row.len() != cols) {
                return Err(load_err(
                    &format!("layer {l}"),
                    &format!("weight row {r} has {} columns, expected {cols}", layer.weight[r].len()),
                ));
            }
            if layer.bias.len() != rows {
                return Err(load_err(
                    &format!("layer {l}"),
                    &format!("bias has {} entries, weight has {rows} rows", layer.bias.len()),
                ));
            }
            if let Some(prev) = fan_in {
                if prev != cols {
                    return Err(load_err(
                        &format!("layer {l}"),
                        &format!("expects {cols} inputs but previous layer emits {prev}"),
                    ));
                }
            }
            let finite = layer.weight.iter().flatten().chain(&layer.bias).all(|v| v.is_finite());
            if !finite {
                return Err(load_err(&format!("layer {l}"), "non-finite weight or bias"));
            }
            fan_in = Some(rows);
        }
        let shape: Vec<String> = std::iter::once(layers[0].weight[0].len())
            .chain(layers.iter().map(|l| l.weight.len()))
            .map(|n| n.to_string())
            .collect();
        let label = format!("mlp {} ({})", shape.join("-"), activation_name(activation));
        Ok(Self {
            layers,
            activation,
            label,
        })
    }

    pub fn from_json_str(text: &str, activation: Option<Activation>) -> Result<Self> {
        let file: MlpFile = serde_json::from_str(text).map_err(|e| load_err("mlp file", &e.to_string()))?;
        Self::new(file.layers, activation.unwrap_or(file.activation))
    }

    /// Loads the JSON weight file; `activation` overrides the one recorded in it.
    pub fn load(path: &Path, activation: Option<Activation>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| load_err(&path.display().to_string(), &e.to_string()))?;
        Self::from_json_str(&text, activation)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&MlpFile {
            layers: self.layers.clone(),
            activation: self.activation,
        })
        .expect("mlp serializes")
    }

    pub fn with_activation(&self, activation: Activation) -> Result<Self> {
        Self::new(self.layers.clone(), activation)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.len()).unwrap_or(0)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.len()))
            .collect()
    }

    /// Output logits.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Returns logits plus every layer's pre-activation (for backprop).
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let last = self.layers.len() - 1;
        let mut input = x.to_vec();
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z: Vec<f64> = layer
                .weight
                .iter()
                .zip(&layer.bias)
                .map(|(row, b)| row.iter().zip(&input).map(|(w, v)| w * v).sum::<f64>() + b)
                .collect();
            input = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
        }
        (input, pre)
    }

    /// Vector-Jacobian product `seed^T d(logits)/dx`.
    pub fn vjp(&self, x: &[f64], seed: &[f64]) -> Vec<f64> {
        let (_, pre) = self.forward(x);
        let last = self.layers.len() - 1;
        let mut delta = seed.to_vec();
        for l in (0..self.layers.len()).rev() {
            if l != last {
                for (d, z) in delta.iter_mut().zip(&pre[l]) {
                    *d *= self.activation.derivative(*z);
                }
            }
            let layer = &self.layers[l];
            let mut back = vec![0.0; layer.weight[0].len()];
            for (row, d) in layer.weight.iter().zip(&delta) {
                for (b, w) in back.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            delta = back;
        }
        delta
    }
}

fn activation_name(a: Activation) -> String {
    match a {
        Activation::Relu => "relu".into(),
        Activation::Softplus(beta) => format!("softplus beta={beta}"),
    }
}

fn load_err(what: &str, reason: &str) -> GpecError {
    GpecError::Load {
        what: what.to_string(),
        reason: reason.to_string(),
    }
}

/// Binary use requires a single output unit.
impl BlackBoxModel for MlpModel {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.output_dim(), 1, "binary MLP needs one output unit");
        sigmoid(self.logits(x)[0])
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p = self.predict(x);
        let scale = p * (1.0 - p);
        Some(self.vjp(x, &[1.0]).into_iter().map(|g| g * scale).collect())
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

impl MulticlassModel for MlpModel {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn num_classes(&self) -> usize {
        self.output_dim()
    }

    fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        self.logits(x)
    }

    fn logit_vjp(&self, x: &[f64], seed: &[f64]) -> Option<Vec<f64>> {
        Some(self.vjp(x, seed))
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
