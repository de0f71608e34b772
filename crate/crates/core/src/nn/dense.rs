use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::matrix::Matrix;
use crate::error::{FddError, Result};

/// Fully connected layer `activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let layer = DenseLayer {
            weights,
            bias,
            activation,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        DenseLayer {
            weights: Matrix::glorot(outputs, inputs, rng),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn zeros_like(&self) -> Self {
        DenseLayer {
            weights: Matrix::zeros(self.weights.rows, self.weights.cols),
            bias: vec![0.0; self.bias.len()],
            activation: self.activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.bias.len() != self.weights.rows {
            return Err(FddError::Shape(format!(
                "dense bias has {} entries for {} outputs",
                self.bias.len(),
                self.weights.rows
            )));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(FddError::Shape("dense bias contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows
    }

    pub fn forward_cached(&self, x: &[f64]) -> DenseCache {
        let mut z = self.bias.clone();
        self.weights.mul_vec_acc(x, &mut z);
        let mut y = vec![0.0; z.len()];
        self.activation.apply(&z, &mut y);
        DenseCache { z, y }
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], cache: &DenseCache, dy: &[f64], grad: &mut DenseLayer) -> Vec<f64> {
        let mut dz = vec![0.0; dy.len()];
        self.activation.backward(&cache.z, &cache.y, dy, &mut dz);
        self.backward_from_preactivation(x, &dz, grad)
    }

    pub(crate) fn backward_from_preactivation(&self, x: &[f64], dz: &[f64], grad: &mut DenseLayer) -> Vec<f64> {
        grad.weights.outer_acc(dz, x);
        for (g, d) in grad.bias.iter_mut().zip(dz) {
            *g += d;
        }
        let mut dx = vec![0.0; x.len()];
        self.weights.tr_mul_vec_acc(dz, &mut dx);
        dx
    }
}

/// Checked single-layer evaluation.
pub fn dense_forward(params: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != params.inputs() {
        return Err(FddError::Shape(format!(
            "dense layer expects {} inputs, got {}",
            params.inputs(),
            x.len()
        )));
    }
    Ok(params.forward_cached(x).y)
}
