//! Coefficient of determination and the row-normalized confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::plant::FaultCondition;

/// `1 − SS_res / SS_tot`.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(FddError::Shape(format!(
            "{} true values vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(FddError::Data("r² needs at least two samples".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(FddError::UndefinedScore("true values are constant".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Arithmetic mean of per-channel r² over paired (true, predicted) columns.
pub fn mean_r2(columns: &[(&[f64], &[f64])]) -> Result<f64> {
    if columns.is_empty() {
        return Err(FddError::Data("no channels to score".into()));
    }
    let mut total = 0.0;
    for (t, p) in columns {
        total += r2_score(t, p)?;
    }
    Ok(total / columns.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Raw counts, rows = true class, columns = predicted class.
    pub counts: [[usize; FaultCondition::COUNT]; FaultCondition::COUNT],
    /// Each row divided by its support; all-zero for unsupported rows.
    pub normalized: [[f64; FaultCondition::COUNT]; FaultCondition::COUNT],
    /// Classes with no true samples.
    pub unsupported: Vec<FaultCondition>,
}

impl ConfusionMatrix {
    pub fn support(&self, class: FaultCondition) -> usize {
        self.counts[class.index()].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Fraction of correct predictions: support-weighted diagonal mass.
    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..FaultCondition::COUNT).map(|k| self.counts[k][k]).sum();
        correct as f64 / self.total() as f64
    }

    pub fn recall(&self, class: FaultCondition) -> f64 {
        self.normalized[class.index()][class.index()]
    }
}

pub fn confusion_matrix(labels_true: &[FaultCondition], labels_pred: &[FaultCondition]) -> Result<ConfusionMatrix> {
    if labels_true.len() != labels_pred.len() {
        return Err(FddError::Shape(format!(
            "{} true labels vs {} predictions",
            labels_true.len(),
            labels_pred.len()
        )));
    }
    if labels_true.is_empty() {
        return Err(FddError::Data("no labels to compare".into()));
    }
    let mut counts = [[0usize; FaultCondition::COUNT]; FaultCondition::COUNT];
    for (t, p) in labels_true.iter().zip(labels_pred) {
        counts[t.index()][p.index()] += 1;
    }
    let mut normalized = [[0.0; FaultCondition::COUNT]; FaultCondition::COUNT];
    let mut unsupported = Vec::new();
    for (k, row) in counts.iter().enumerate() {
        let support: usize = row.iter().sum();
        if support == 0 {
            unsupported.push(FaultCondition::ALL[k]);
            continue;
        }
        for (j, &c) in row.iter().enumerate() {
            normalized[k][j] = c as f64 / support as f64;
        }
    }
    Ok(ConfusionMatrix {
        counts,
        normalized,
        unsupported,
    })
}

/// Maps class indices to labels, rejecting indices outside the six classes.
pub fn labels_from_indices(indices: &[usize]) -> Result<Vec<FaultCondition>> {
    indices
        .iter()
        .map(|&k| FaultCondition::from_index(k).ok_or_else(|| FddError::Data(format!("unknown class index {k}"))))
        .collect()
}
