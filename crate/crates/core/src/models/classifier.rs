//! Six-way health-condition classifiers over raw signals or residuals.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::artifact::{FoldRecord, ModelSpec, TrainedModel};
use super::training::{fit, Dataset, Example, TrainConfig};
use super::{Layout, UnitKind};
use crate::error::{FddError, Result};
use crate::nn::{one_hot, Activation, LossAt, LossKind, Network};
use crate::plant::FaultCondition;
use crate::preprocess::{ts_kfold, ScalerParams, SplitSpec};
use crate::rng::{derive_seed, rng_from_seed};

pub const CLASSIFIER_PRESETS: [&str; 4] = ["clf-mlp-all", "clf-mlp-res", "clf-lstm-all", "clf-lstm-res"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Mlp,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// u, v, rpm, i.
    All,
    /// rpm and current residuals against the nominal model.
    Residuals,
}

impl FeatureMode {
    pub fn width(self) -> usize {
        match self {
            FeatureMode::All => 4,
            FeatureMode::Residuals => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::All => "all",
            FeatureMode::Residuals => "residuals",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMode {
    type Err = FddError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureMode::All),
            "residuals" | "res" => Ok(FeatureMode::Residuals),
            _ => Err(FddError::Config(format!("unknown feature mode '{s}' (expected all or residuals)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub features: FeatureMode,
    pub layout: Layout,
    pub batch_size: usize,
    /// Samples per input sequence; 1 for MLPs.
    pub window: usize,
    pub gate_activation: Activation,
    pub train: TrainConfig,
}

impl ClassifierSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let (kind, features, layout) = match name {
            "clf-mlp-all" => (ClassifierKind::Mlp, FeatureMode::All, "48P,48P"),
            "clf-mlp-res" => (ClassifierKind::Mlp, FeatureMode::Residuals, "48P,48P"),
            "clf-lstm-all" => (ClassifierKind::Lstm, FeatureMode::All, "8L,48P,48P"),
            "clf-lstm-res" => (ClassifierKind::Lstm, FeatureMode::Residuals, "16L,48P,48P"),
            _ => {
                return Err(FddError::Config(format!(
                    "unknown classifier preset '{name}' (expected one of {CLASSIFIER_PRESETS:?})"
                )))
            }
        };
        Ok(ClassifierSpec {
            kind,
            features,
            layout: layout.parse()?,
            batch_size: 1,
            window: if kind == ClassifierKind::Lstm { 5 } else { 1 },
            gate_activation: Activation::HardSigmoid,
            train: TrainConfig::default(),
        })
    }

    pub fn name(&self) -> String {
        let kind = match self.kind {
            ClassifierKind::Mlp => "MLP",
            ClassifierKind::Lstm => "LSTM",
        };
        let feat = match self.features {
            FeatureMode::All => "all",
            FeatureMode::Residuals => "res",
        };
        format!("{kind}_{feat}")
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let expected = match self.kind {
            ClassifierKind::Mlp => None,
            ClassifierKind::Lstm => Some(UnitKind::Lstm),
        };
        if self.layout.recurrent() != expected {
            return Err(FddError::Config(format!("layout {} does not fit a {} classifier", self.layout, self.name())));
        }
        if self.batch_size == 0 || self.window == 0 {
            return Err(FddError::Config("batch size and window must be at least 1".into()));
        }
        if self.kind == ClassifierKind::Mlp && self.window != 1 {
            return Err(FddError::Config("MLP classifiers take a window of 1".into()));
        }
        Ok(())
    }

    fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = rng_from_seed(derive_seed(seed, "init"));
        self.layout.build(
            self.features.width(),
            FaultCondition::COUNT,
            Activation::Softmax,
            self.gate_activation,
            &mut rng,
        )
    }
}

/// Labeled feature rows grouped into independent recordings. Input
/// windows never cross a recording boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierData {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<FaultCondition>,
    pub recordings: Vec<Range<usize>>,
}

impl ClassifierData {
    pub fn validate(&self, width: usize) -> Result<()> {
        check_rows(&self.features, &self.recordings, width)?;
        if self.labels.len() != self.features.len() {
            return Err(FddError::Data(format!(
                "{} labels for {} feature rows",
                self.labels.len(),
                self.features.len()
            )));
        }
        Ok(())
    }
}

fn check_rows(features: &[Vec<f64>], recordings: &[Range<usize>], width: usize) -> Result<()> {
    if features.iter().any(|r| r.len() != width) {
        return Err(FddError::Data(format!("feature rows must have width {width}")));
    }
    if features.iter().flatten().any(|x| !x.is_finite()) {
        return Err(FddError::Data("features contain non-finite values".into()));
    }
    let mut next = 0;
    for r in recordings {
        if r.start != next || r.end <= r.start {
            return Err(FddError::Data("recordings must tile the rows in order without gaps".into()));
        }
        next = r.end;
    }
    if next != features.len() {
        return Err(FddError::Data("recordings must cover every feature row".into()));
    }
    Ok(())
}

/// Window of `w` scaled rows ending at `row`, front-padded with the first
/// row of its recording.
fn window_rows(scaled: &[Vec<f64>], rec: &Range<usize>, row: usize, w: usize) -> Vec<Vec<f64>> {
    (0..w)
        .map(|k| {
            let back = w - 1 - k;
            let src = if row >= rec.start + back { row - back } else { rec.start };
            scaled[src].clone()
        })
        .collect()
}

fn examples(
    scaled: &[Vec<f64>],
    labels: &[FaultCondition],
    recordings: &[Range<usize>],
    rows: &[Range<usize>],
    w: usize,
) -> Vec<Example> {
    let mut out = Vec::new();
    for range in rows {
        let rec = recordings.iter().find(|r| r.contains(&range.start)).expect("row inside a recording");
        for row in range.clone() {
            out.push(Example {
                inputs: window_rows(scaled, rec, row, w),
                targets: vec![one_hot(labels[row].index(), FaultCondition::COUNT)],
            });
        }
    }
    out
}

fn fit_scaler_on(features: &[Vec<f64>], rows: &[Range<usize>], width: usize) -> Result<ScalerParams> {
    let cols: Vec<Vec<f64>> = (0..width)
        .map(|c| rows.iter().flat_map(|r| r.clone()).map(|i| features[i][c]).collect())
        .collect();
    ScalerParams::fit(&cols.iter().map(Vec::as_slice).collect::<Vec<_>>())
}

fn scale_all(sc: &ScalerParams, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    features.iter().map(|r| sc.transform_row(r)).collect()
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = k;
        }
    }
    best
}

fn accuracy(net: &Network, data: &[Example]) -> Result<f64> {
    let zero = net.initial_state();
    let mut hits = 0usize;
    for ex in data {
        let (ys, _) = net.predict_sequence(&ex.inputs, &zero)?;
        let p = ys.last().expect("non-empty window");
        if ex.targets[0][argmax(p)] == 1.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

fn require_all_classes(labels: &[FaultCondition], rows: &[Range<usize>], what: &str) -> Result<()> {
    let mut seen = [false; FaultCondition::COUNT];
    for r in rows {
        for i in r.clone() {
            seen[labels[i].index()] = true;
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(FddError::Data(format!(
            "class {} is absent from the {what}",
            FaultCondition::ALL[k]
        )));
    }
    Ok(())
}

/// Cross-validated softmax/cross-entropy training. Folds are
/// forward-chaining within every recording, so each fold trains on the
/// early part of every recording and validates on a later part.
pub fn train_classifier(spec: &ClassifierSpec, data: &ClassifierData, split: SplitSpec, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    spec.train.validate()?;
    let width = spec.features.width();
    data.validate(width)?;
    let all_rows = data.recordings.clone();
    require_all_classes(&data.labels, &all_rows, "training data")?;

    let mut folds: Vec<(Vec<Range<usize>>, Vec<Range<usize>>)> = vec![(Vec::new(), Vec::new()); split.k];
    for rec in &data.recordings {
        if rec.len() < split.k + 2 {
            return Err(FddError::Data(format!(
                "recording {rec:?} is too short for {}-fold validation",
                split.k
            )));
        }
        for (j, f) in ts_kfold(rec.len(), split)?.into_iter().enumerate() {
            folds[j].0.push(rec.start + f.train.start..rec.start + f.train.end);
            folds[j].1.push(rec.start + f.validation.start..rec.start + f.validation.end);
        }
    }

    let net0 = spec.build(seed)?;
    let mut cv = Vec::with_capacity(split.k);
    for (j, (train_rows, val_rows)) in folds.into_iter().enumerate() {
        require_all_classes(&data.labels, &train_rows, &format!("training part of fold {j}"))?;
        let sc = fit_scaler_on(&data.features, &train_rows, width)?;
        let scaled = scale_all(&sc, &data.features);
        let train = examples(&scaled, &data.labels, &data.recordings, &train_rows, spec.window);
        let val = examples(&scaled, &data.labels, &data.recordings, &val_rows, spec.window);
        let mut net = net0.clone();
        let mut rng = rng_from_seed(derive_seed(seed, &format!("fold{j}/shuffle")));
        let result = fit(
            &mut net,
            &Dataset::Independent {
                examples: train,
                at: LossAt::LastStep,
            },
            Some(&Dataset::Independent {
                examples: val.clone(),
                at: LossAt::LastStep,
            }),
            LossKind::CrossEntropy,
            spec.batch_size,
            &spec.train,
            &mut rng,
        )?;
        cv.push(FoldRecord {
            fold: j,
            train_rows,
            validation_rows: val_rows,
            best_epoch: result.best_epoch,
            best_val_loss: result.best_val_loss.unwrap_or(f64::NAN),
            score: accuracy(&net, &val)?,
            history: result.history,
        });
    }

    let mean_best = cv.iter().map(|f| f.best_epoch as f64).sum::<f64>() / cv.len() as f64;
    let final_cfg = TrainConfig {
        epochs: (mean_best.round() as usize).max(1),
        ..spec.train
    };
    let sc = fit_scaler_on(&data.features, &all_rows, width)?;
    let scaled = scale_all(&sc, &data.features);
    let train = examples(&scaled, &data.labels, &data.recordings, &all_rows, spec.window);
    let mut net = net0;
    let mut rng = rng_from_seed(derive_seed(seed, "final/shuffle"));
    let result = fit(
        &mut net,
        &Dataset::Independent {
            examples: train,
            at: LossAt::LastStep,
        },
        None,
        LossKind::CrossEntropy,
        spec.batch_size,
        &final_cfg,
        &mut rng,
    )?;
    let model = TrainedModel {
        spec: ModelSpec::Classifier(spec.clone()),
        network: net,
        input_scaler: sc,
        target_scaler: None,
        history: result.history,
        cv,
        scaler_rows: all_rows,
        seed,
    };
    model.validate()?;
    Ok(model)
}

/// Class probabilities for every row; each row sums to one.
pub fn predict_proba(model: &TrainedModel, features: &[Vec<f64>], recordings: &[Range<usize>]) -> Result<Vec<Vec<f64>>> {
    let spec = model
        .classifier_spec()
        .ok_or_else(|| FddError::Data("model is not a classifier".into()))?;
    check_rows(features, recordings, spec.features.width())?;
    let scaled = scale_all(&model.input_scaler, features);
    let zero = model.network.initial_state();
    let mut out = Vec::with_capacity(features.len());
    for rec in recordings {
        for row in rec.clone() {
            let (ys, _) = model
                .network
                .predict_sequence(&window_rows(&scaled, rec, row, spec.window), &zero)?;
            out.push(ys.last().expect("non-empty window").clone());
        }
    }
    Ok(out)
}

/// Most probable class per row.
pub fn predict_classes(model: &TrainedModel, features: &[Vec<f64>], recordings: &[Range<usize>]) -> Result<Vec<FaultCondition>> {
    Ok(predict_proba(model, features, recordings)?
        .iter()
        .map(|p| FaultCondition::ALL[argmax(p)])
        .collect())
}
