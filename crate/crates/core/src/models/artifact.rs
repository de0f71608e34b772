//! The trained-model JSON document.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::ClassifierSpec;
use super::regressor::RegressorSpec;
use super::training::EpochRecord;
use crate::error::{FddError, Result};
use crate::nn::Activation;
use crate::plant::FaultCondition;
use crate::preprocess::ScalerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum ModelSpec {
    Regressor(RegressorSpec),
    Classifier(ClassifierSpec),
}

/// One cross-validation fold: which rows trained and validated it, where
/// early stopping landed, and its validation score (mean r² for
/// regressors, accuracy for classifiers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub train_rows: Vec<Range<usize>>,
    pub validation_rows: Vec<Range<usize>>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub score: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub network: crate::nn::Network,
    pub input_scaler: ScalerParams,
    /// Regressors only.
    pub target_scaler: Option<ScalerParams>,
    /// Epochs of the final fit on all training rows.
    pub history: Vec<EpochRecord>,
    pub cv: Vec<FoldRecord>,
    /// Rows the final scalers were fitted on.
    pub scaler_rows: Vec<Range<usize>>,
    pub seed: u64,
}

fn invariant(msg: impl Into<String>) -> FddError {
    FddError::Shape(msg.into())
}

impl TrainedModel {
    /// Mean validation score over the cross-validation folds.
    pub fn cv_score(&self) -> f64 {
        self.cv.iter().map(|f| f.score).sum::<f64>() / self.cv.len() as f64
    }

    pub fn regressor_spec(&self) -> Option<&RegressorSpec> {
        match &self.spec {
            ModelSpec::Regressor(s) => Some(s),
            ModelSpec::Classifier(_) => None,
        }
    }

    pub fn classifier_spec(&self) -> Option<&ClassifierSpec> {
        match &self.spec {
            ModelSpec::Classifier(s) => Some(s),
            ModelSpec::Regressor(_) => None,
        }
    }

    /// Checks every shape and consistency invariant of the artifact.
    pub fn validate(&self) -> Result<()> {
        let net = &self.network;
        net.validate()?;
        if !net.is_finite() {
            return Err(invariant("network parameters are not all finite"));
        }
        self.input_scaler.validate()?;
        if self.history.is_empty() {
            return Err(invariant("training history is empty"));
        }
        if self.history.iter().enumerate().any(|(k, r)| r.epoch != k + 1) {
            return Err(invariant("training history epochs are not consecutive from 1"));
        }
        if self.cv.is_empty() {
            return Err(invariant("no cross-validation folds recorded"));
        }
        let (layout, inputs, outputs, out_act) = match &self.spec {
            ModelSpec::Regressor(s) => {
                s.validate()?;
                let ts = self
                    .target_scaler
                    .as_ref()
                    .ok_or_else(|| invariant("regressor lacks a target scaler"))?;
                ts.validate()?;
                if ts.width() != 2 || self.input_scaler.width() != 2 {
                    return Err(invariant("regressor scalers must have two columns each"));
                }
                (&s.layout, s.feature_width(), 2, Activation::Linear)
            }
            ModelSpec::Classifier(s) => {
                s.validate()?;
                if self.target_scaler.is_some() {
                    return Err(invariant("classifier carries a target scaler"));
                }
                if self.input_scaler.width() != s.features.width() {
                    return Err(invariant(format!(
                        "classifier scaler has {} columns, features need {}",
                        self.input_scaler.width(),
                        s.features.width()
                    )));
                }
                (&s.layout, s.features.width(), FaultCondition::COUNT, Activation::Softmax)
            }
        };
        if !layout.matches(net) {
            return Err(invariant(format!("network does not have the hidden layout {layout}")));
        }
        if net.input_size() != inputs || net.output_size() != outputs {
            return Err(invariant(format!(
                "network maps {} -> {}, spec needs {inputs} -> {outputs}",
                net.input_size(),
                net.output_size()
            )));
        }
        if net.dense.last().map(|d| d.activation) != Some(out_act) {
            return Err(invariant(format!("output activation must be {out_act}")));
        }
        if net.dense[..net.dense.len() - 1].iter().any(|d| d.activation != Activation::Tanh) {
            return Err(invariant("hidden perceptron layers must use tanh"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: TrainedModel = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: TrainedModel = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.validate()?;
        Ok(model)
    }
}
