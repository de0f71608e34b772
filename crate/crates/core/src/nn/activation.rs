use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::FddError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Linear,
    Softmax,
    /// `clamp(0.2·x + 0.5, 0, 1)`
    HardSigmoid,
    Logistic,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
            Activation::Softmax => "softmax",
            Activation::HardSigmoid => "hard-sigmoid",
            Activation::Logistic => "logistic",
        }
    }

    /// Scalar evaluation; softmax has no scalar form and is handled by [`apply`](Self::apply).
    #[inline]
    pub fn scalar(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
            Activation::HardSigmoid => (0.2 * z + 0.5).clamp(0.0, 1.0),
            Activation::Logistic => logistic(z),
            Activation::Softmax => panic!("softmax is not element-wise"),
        }
    }

    /// Derivative in terms of pre-activation `z` and output `y`.
    #[inline]
    pub fn scalar_derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
            Activation::HardSigmoid => {
                if z > -2.5 && z < 2.5 {
                    0.2
                } else {
                    0.0
                }
            }
            Activation::Logistic => y * (1.0 - y),
            Activation::Softmax => panic!("softmax is not element-wise"),
        }
    }

    /// Maps pre-activations `z` into `out`.
    pub fn apply(self, z: &[f64], out: &mut [f64]) {
        match self {
            Activation::Softmax => softmax(z, out),
            act => {
                for (o, &x) in out.iter_mut().zip(z) {
                    *o = act.scalar(x);
                }
            }
        }
    }

    /// Pulls an output gradient `dy` back to the pre-activation gradient.
    pub fn backward(self, z: &[f64], y: &[f64], dy: &[f64], dz: &mut [f64]) {
        match self {
            Activation::Softmax => {
                let s: f64 = dy.iter().zip(y).map(|(a, b)| a * b).sum();
                for ((d, &yk), &g) in dz.iter_mut().zip(y).zip(dy) {
                    *d = yk * (g - s);
                }
            }
            act => {
                for k in 0..dz.len() {
                    dz[k] = dy[k] * act.scalar_derivative(z[k], y[k]);
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = FddError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Activation::Tanh,
            "linear" => Activation::Linear,
            "softmax" => Activation::Softmax,
            "hard-sigmoid" | "hard_sigmoid" => Activation::HardSigmoid,
            "logistic" | "sigmoid" => Activation::Logistic,
            other => return Err(FddError::Config(format!("unknown activation `{other}`"))),
        })
    }
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}
