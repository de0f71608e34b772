use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};

/// Probability floor for cross-entropy.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    MeanSquaredError,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// How many true-class probabilities hit the floor.
    pub clamped: usize,
}

/// Mean loss over rows. Cross-entropy targets are one-hot (or soft) rows.
pub fn loss(kind: LossKind, predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<LossValue> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(FddError::Shape(format!(
            "{} prediction rows vs {} target rows",
            predictions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(FddError::Shape("prediction and target widths differ".into()));
        }
        let (l, _, c) = step_loss_and_grad(kind, p, t, 1.0);
        total += l;
        clamped += c;
    }
    Ok(LossValue {
        value: total / predictions.len() as f64,
        clamped,
    })
}

/// Loss of one row and its gradient w.r.t. the predictions, the gradient
/// multiplied by `scale`.
pub(crate) fn step_loss_and_grad(kind: LossKind, y: &[f64], t: &[f64], scale: f64) -> (f64, Vec<f64>, usize) {
    match kind {
        LossKind::MeanSquaredError => {
            let n = y.len() as f64;
            let mut l = 0.0;
            let mut g = Vec::with_capacity(y.len());
            for (a, b) in y.iter().zip(t) {
                let d = a - b;
                l += d * d;
                g.push(scale * 2.0 * d / n);
            }
            (l / n, g, 0)
        }
        LossKind::CrossEntropy => {
            let mut l = 0.0;
            let mut clamped = 0;
            let mut g = vec![0.0; y.len()];
            for k in 0..y.len() {
                if t[k] == 0.0 {
                    continue;
                }
                let p = if y[k] < PROB_EPSILON {
                    clamped += 1;
                    PROB_EPSILON
                } else {
                    y[k]
                };
                l -= t[k] * p.ln();
                g[k] = -scale * t[k] / p;
            }
            (l, g, clamped)
        }
    }
}

pub fn one_hot(class: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_exact_prediction_is_zero() {
        let p = vec![vec![1.0, -2.0], vec![0.5, 0.0]];
        assert_eq!(loss(LossKind::MeanSquaredError, &p, &p).unwrap().value, 0.0);
    }

    #[test]
    fn uniform_six_class_cross_entropy_is_ln6() {
        let p = vec![vec![1.0 / 6.0; 6]; 4];
        let t: Vec<Vec<f64>> = (0..4).map(|k| one_hot(k, 6)).collect();
        let l = loss(LossKind::CrossEntropy, &p, &t).unwrap().value;
        assert!((l - 6f64.ln()).abs() < 1e-12);
        assert!((l - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn matches_elementwise_recomputation() {
        let p = vec![vec![0.3, -1.2, 2.0], vec![0.1, 0.4, -0.6]];
        let t = vec![vec![0.0, -1.0, 1.5], vec![1.0, 0.0, 0.0]];
        let mut acc = 0.0;
        for r in 0..2 {
            for c in 0..3 {
                acc += (p[r][c] - t[r][c]) * (p[r][c] - t[r][c]);
            }
        }
        let l = loss(LossKind::MeanSquaredError, &p, &t).unwrap().value;
        assert!((l - acc / 6.0).abs() < 1e-12);

        let q = vec![vec![0.2, 0.5, 0.3], vec![0.7, 0.1, 0.2]];
        let ce = loss(LossKind::CrossEntropy, &q, &t[1..].iter().chain([&vec![0.0, 1.0, 0.0]]).cloned().collect::<Vec<_>>()).unwrap();
        let expected = -(0.2f64.ln() + 0.1f64.ln()) / 2.0;
        assert!((ce.value - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped_and_flagged() {
        let l = loss(LossKind::CrossEntropy, &[vec![1.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        assert_eq!(l.clamped, 1);
        assert!((l.value + PROB_EPSILON.ln()).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        assert!(loss(LossKind::MeanSquaredError, &[vec![1.0]], &[]).is_err());
    }
}
