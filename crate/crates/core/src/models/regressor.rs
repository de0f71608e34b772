//! Nominal-model regressors mapping (u, v) to (rpm, i).
//!
//! All regressors see the same two input columns (the control input, after
//! optional dead-time and deadband augmentation, and the supply voltage) and
//! predict the same two targets. Inputs and targets are IQR-scaled with
//! statistics from training rows only. NARX models additionally see lagged
//! targets: measured ones in series-parallel mode, their own predictions in
//! parallel mode.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::artifact::{FoldRecord, ModelSpec, TrainedModel};
use super::training::{fit, Dataset, Example, TrainConfig};
use super::{Layout, UnitKind};
use crate::error::{FddError, Result};
use crate::fdd::metrics::mean_r2;
use crate::frame::{Channel, TimeSeriesFrame};
use crate::nn::{Activation, LossAt, LossKind, Network};
use crate::plant::PlantParams;
use crate::preprocess::{apply_deadband, apply_deadtime, lag_row, ts_kfold, DelaySpec, ScalerParams, SplitSpec, Tap};
use crate::rng::{derive_seed, rng_from_seed};

/// Scaled predictions beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

pub const REGRESSOR_PRESETS: [&str; 6] = ["mlp", "mlp-d-db", "narx", "narx-db", "lstm", "gru"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    Mlp,
    MlpDeadtimeDeadband,
    Narx,
    NarxDeadband,
    Lstm,
    Gru,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 6] = [
        RegressorKind::Mlp,
        RegressorKind::MlpDeadtimeDeadband,
        RegressorKind::Narx,
        RegressorKind::NarxDeadband,
        RegressorKind::Lstm,
        RegressorKind::Gru,
    ];

    pub fn preset_name(self) -> &'static str {
        REGRESSOR_PRESETS[self as usize]
    }

    /// Row label used in score tables.
    pub fn label(self) -> &'static str {
        match self {
            RegressorKind::Mlp => "MLP",
            RegressorKind::MlpDeadtimeDeadband => "MLP+D+DB",
            RegressorKind::Narx => "NARXNN",
            RegressorKind::NarxDeadband => "NARXNN+DB",
            RegressorKind::Lstm => "LSTM",
            RegressorKind::Gru => "GRU",
        }
    }

    pub fn is_narx(self) -> bool {
        matches!(self, RegressorKind::Narx | RegressorKind::NarxDeadband)
    }

    fn recurrent_unit(self) -> Option<UnitKind> {
        match self {
            RegressorKind::Lstm => Some(UnitKind::Lstm),
            RegressorKind::Gru => Some(UnitKind::Gru),
            _ => None,
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.preset_name())
    }
}

impl FromStr for RegressorKind {
    type Err = FddError;

    fn from_str(s: &str) -> Result<Self> {
        RegressorKind::ALL
            .into_iter()
            .find(|k| k.preset_name() == s)
            .ok_or_else(|| FddError::Config(format!("unknown regressor preset '{s}' (expected one of {REGRESSOR_PRESETS:?})")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub kind: RegressorKind,
    pub layout: Layout,
    pub batch_size: usize,
    /// Truncated-BPTT window for recurrent kinds.
    pub lookback: usize,
    /// Tapped delay lines; both taps are empty for non-NARX kinds.
    pub delays: DelaySpec,
    /// Deadband half-width applied to u, if any.
    pub deadband: Option<f64>,
    /// Dead-time shift applied to u, in samples.
    pub deadtime_samples: usize,
    /// Std. dev. of training jitter on fed-back NARX outputs, scaled units.
    pub feedback_noise: f64,
    pub train: TrainConfig,
}

const NO_TAPS: DelaySpec = DelaySpec {
    input: Tap::new(0, 0),
    output: Tap::new(0, 0),
};

impl RegressorSpec {
    /// Preset with the plant's known dead time and deadband.
    pub fn preset_for(kind: RegressorKind, plant: &PlantParams) -> Self {
        let layout = |s: &str| s.parse::<Layout>().expect("preset layout");
        let base = RegressorSpec {
            kind,
            layout: layout("8P,4P"),
            batch_size: 10,
            lookback: 1,
            delays: NO_TAPS,
            deadband: None,
            deadtime_samples: 0,
            feedback_noise: 0.0,
            train: TrainConfig::default(),
        };
        let narx = RegressorSpec {
            layout: layout("32P,4P"),
            batch_size: 5,
            delays: DelaySpec {
                input: Tap::new(20, 0),
                output: Tap::new(2, 0),
            },
            feedback_noise: 0.2,
            ..base.clone()
        };
        match kind {
            RegressorKind::Mlp => base,
            RegressorKind::MlpDeadtimeDeadband => RegressorSpec {
                deadband: Some(plant.deadband_u),
                deadtime_samples: plant.dead_time_samples(),
                ..base
            },
            RegressorKind::Narx => narx,
            RegressorKind::NarxDeadband => RegressorSpec {
                deadband: Some(plant.deadband_u),
                ..narx
            },
            RegressorKind::Lstm => RegressorSpec {
                layout: layout("24L,16P,16P"),
                batch_size: 5,
                ..base
            },
            RegressorKind::Gru => RegressorSpec {
                layout: layout("24G,16P,16P"),
                batch_size: 5,
                ..base
            },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        Ok(Self::preset_for(name.parse()?, &PlantParams::default()))
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.layout.recurrent() != self.kind.recurrent_unit() {
            return Err(FddError::Config(format!(
                "layout {} does not fit a {} regressor",
                self.layout, self.kind
            )));
        }
        if self.batch_size == 0 || self.lookback == 0 {
            return Err(FddError::Config("batch size and lookback must be at least 1".into()));
        }
        if self.kind.is_narx() {
            if self.delays.input.delays == 0 || self.delays.output.delays == 0 {
                return Err(FddError::Config("NARX needs at least one input and one output delay".into()));
            }
        } else if self.delays != NO_TAPS {
            return Err(FddError::Config(format!("{} regressors take no delay lines", self.kind)));
        }
        if !(self.feedback_noise >= 0.0 && self.feedback_noise.is_finite()) {
            return Err(FddError::Config(format!("feedback noise {} is not a finite non-negative value", self.feedback_noise)));
        }
        if self.feedback_noise > 0.0 && !self.kind.is_narx() {
            return Err(FddError::Config(format!("{} regressors have no fed-back outputs to jitter", self.kind)));
        }
        if let Some(w) = self.deadband {
            if !(0.0..1.0).contains(&w) {
                return Err(FddError::Config(format!("deadband {w} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Samples of history consumed before the first prediction.
    pub fn warmup(&self) -> usize {
        if self.kind.is_narx() {
            self.delays.max_delay(true)
        } else {
            0
        }
    }

    pub fn feature_width(&self) -> usize {
        if self.kind.is_narx() {
            self.delays.feature_width(2, 2, true)
        } else {
            2
        }
    }

    fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = rng_from_seed(derive_seed(seed, "init"));
        self.layout
            .build(self.feature_width(), 2, Activation::Linear, Activation::Logistic, &mut rng)
    }

    /// The augmented input columns (u', v) in physical units.
    pub fn input_columns(&self, u: &[f64], v: &[f64]) -> Result<[Vec<f64>; 2]> {
        let mut u = apply_deadtime(u, self.deadtime_samples);
        if let Some(w) = self.deadband {
            u = apply_deadband(&u, w)?;
        }
        Ok([u, v.to_vec()])
    }
}

/// Scaled model inputs and targets for every sample of a series.
struct Scaled {
    inputs: [Vec<f64>; 2],
    outputs: [Vec<f64>; 2],
}

impl Scaled {
    fn new(raw_in: &[Vec<f64>; 2], raw_out: [&[f64]; 2], in_sc: &ScalerParams, out_sc: &ScalerParams) -> Self {
        Scaled {
            inputs: [in_sc.transform_column(0, &raw_in[0]), in_sc.transform_column(1, &raw_in[1])],
            outputs: [out_sc.transform_column(0, raw_out[0]), out_sc.transform_column(1, raw_out[1])],
        }
    }

    fn step_input(&self, spec: &RegressorSpec, t: usize) -> Vec<f64> {
        if spec.kind.is_narx() {
            let ins = [self.inputs[0].as_slice(), self.inputs[1].as_slice()];
            let outs = [self.outputs[0].as_slice(), self.outputs[1].as_slice()];
            lag_row(&ins, &outs, &spec.delays, true, t)
        } else {
            vec![self.inputs[0][t], self.inputs[1][t]]
        }
    }

    fn target(&self, t: usize) -> Vec<f64> {
        vec![self.outputs[0][t], self.outputs[1][t]]
    }

    /// Training (or validation) data whose targets lie in `rows`.
    fn dataset(&self, spec: &RegressorSpec, rows: Range<usize>) -> Dataset {
        if spec.kind.recurrent_unit().is_some() {
            Dataset::Stateful {
                inputs: (0..rows.end).map(|t| self.step_input(spec, t)).collect(),
                targets: (0..rows.end).map(|t| self.target(t)).collect(),
                window: spec.lookback,
                loss_from: rows.start,
            }
        } else {
            Dataset::Independent {
                examples: rows
                    .map(|t| Example {
                        inputs: vec![self.step_input(spec, t)],
                        targets: vec![self.target(t)],
                    })
                    .collect(),
                at: LossAt::EveryStep,
            }
        }
    }

    /// Training data with Gaussian jitter of `spec.feedback_noise` (scaled
    /// units) on the fed-back output taps. Without it the fitted NARX leans
    /// almost entirely on its last outputs and drifts when run free.
    fn training_set(&self, spec: &RegressorSpec, rows: Range<usize>, seed: u64) -> Dataset {
        let mut data = self.dataset(spec, rows);
        if let (true, Dataset::Independent { examples, .. }) = (spec.kind.is_narx() && spec.feedback_noise > 0.0, &mut data) {
            let mut rng = rng_from_seed(seed);
            let first_fed_back = spec.feature_width() - 2 * spec.delays.output.delays;
            for ex in examples.iter_mut() {
                for x in &mut ex.inputs[0][first_fed_back..] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *x += spec.feedback_noise * z;
                }
            }
        }
        data
    }

    /// One-step predictions for every t in `rows` from measured history.
    fn predict(&self, spec: &RegressorSpec, net: &Network, rows: Range<usize>) -> Result<Vec<Vec<f64>>> {
        if spec.kind.recurrent_unit().is_some() {
            let xs: Vec<Vec<f64>> = (0..rows.end).map(|t| self.step_input(spec, t)).collect();
            let (ys, _) = net.predict_sequence(&xs, &net.initial_state())?;
            Ok(ys[rows.start..].to_vec())
        } else {
            let zero = net.initial_state();
            rows.map(|t| Ok(net.step(&self.step_input(spec, t), &zero)?.0)).collect()
        }
    }
}

fn fit_scalers(raw_in: &[Vec<f64>; 2], frame: &TimeSeriesFrame, rows: Range<usize>) -> Result<(ScalerParams, ScalerParams)> {
    let ins = ScalerParams::fit(&[&raw_in[0][rows.clone()], &raw_in[1][rows.clone()]])?;
    let outs = ScalerParams::fit_rows(frame, &Channel::OUTPUTS, rows)?;
    Ok((ins, outs))
}

fn column_r2(targets: &[Vec<f64>], preds: &[Vec<f64>]) -> Result<f64> {
    let col = |m: &[Vec<f64>], k: usize| m.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let (t0, t1, p0, p1) = (col(targets, 0), col(targets, 1), col(preds, 0), col(preds, 1));
    mean_r2(&[(&t0, &p0), (&t1, &p1)])
}

/// Trains with forward-chaining cross-validation and early stopping, then
/// refits on the whole frame for the mean best epoch count.
pub fn train_regressor(spec: &RegressorSpec, frame: &TimeSeriesFrame, split: SplitSpec, seed: u64) -> Result<TrainedModel> {
    spec.validate()?;
    spec.train.validate()?;
    frame.validate()?;
    let n = frame.len();
    let warm = spec.warmup();
    if n < split.k + 2 {
        return Err(FddError::Data(format!("{n} samples are too few for {}-fold validation", split.k)));
    }
    let folds = ts_kfold(n, split)?;
    if folds[0].train.end < warm + 4 {
        return Err(FddError::Data(format!(
            "first training fold holds {} samples; need at least {} after the {warm}-sample warm-up",
            folds[0].train.end,
            warm + 4
        )));
    }
    let raw_in = spec.input_columns(frame.channel(Channel::U), frame.channel(Channel::V))?;
    let outputs = [frame.channel(Channel::Rpm), frame.channel(Channel::I)];
    let net0 = spec.build(seed)?;

    let mut cv = Vec::with_capacity(folds.len());
    for (j, fold) in folds.iter().enumerate() {
        let (in_sc, out_sc) = fit_scalers(&raw_in, frame, 0..fold.train.end)?;
        let scaled = Scaled::new(&raw_in, outputs, &in_sc, &out_sc);
        let train = scaled.training_set(spec, warm..fold.train.end, derive_seed(seed, &format!("fold{j}/jitter")));
        let val_rows = fold.validation.start.max(warm)..fold.validation.end;
        let val = scaled.dataset(spec, val_rows.clone());
        let mut net = net0.clone();
        let mut rng = rng_from_seed(derive_seed(seed, &format!("fold{j}/shuffle")));
        let result = fit(&mut net, &train, Some(&val), LossKind::MeanSquaredError, spec.batch_size, &spec.train, &mut rng)?;
        let preds = scaled.predict(spec, &net, val_rows.clone())?;
        let targets: Vec<Vec<f64>> = val_rows.clone().map(|t| scaled.target(t)).collect();
        cv.push(FoldRecord {
            fold: j,
            train_rows: vec![0..fold.train.end],
            validation_rows: vec![val_rows],
            best_epoch: result.best_epoch,
            best_val_loss: result.best_val_loss.unwrap_or(f64::NAN),
            score: column_r2(&targets, &preds)?,
            history: result.history,
        });
    }

    let mean_best = cv.iter().map(|f| f.best_epoch as f64).sum::<f64>() / cv.len() as f64;
    let final_cfg = TrainConfig {
        epochs: (mean_best.round() as usize).max(1),
        ..spec.train
    };
    let (in_sc, out_sc) = fit_scalers(&raw_in, frame, 0..n)?;
    let scaled = Scaled::new(&raw_in, outputs, &in_sc, &out_sc);
    let mut net = net0;
    let mut rng = rng_from_seed(derive_seed(seed, "final/shuffle"));
    let result = fit(
        &mut net,
        &scaled.training_set(spec, warm..n, derive_seed(seed, "final/jitter")),
        None,
        LossKind::MeanSquaredError,
        spec.batch_size,
        &final_cfg,
        &mut rng,
    )?;
    let model = TrainedModel {
        spec: ModelSpec::Regressor(spec.clone()),
        network: net,
        input_scaler: in_sc,
        target_scaler: Some(out_sc),
        history: result.history,
        cv,
        scaler_rows: vec![0..n],
        seed,
    };
    model.validate()?;
    Ok(model)
}

/// Predicted outputs in physical units for samples `first_row ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub first_row: usize,
    pub rpm: Vec<f64>,
    pub i: Vec<f64>,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.rpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rpm.is_empty()
    }

    /// Restricts to series rows `rows` (which must lie inside the prediction).
    pub fn window(&self, rows: Range<usize>) -> Result<Prediction> {
        if rows.start < self.first_row || rows.end > self.first_row + self.len() || rows.start > rows.end {
            return Err(FddError::Data(format!(
                "rows {rows:?} fall outside predictions for {}..{}",
                self.first_row,
                self.first_row + self.len()
            )));
        }
        let r = (rows.start - self.first_row)..(rows.end - self.first_row);
        Ok(Prediction {
            first_row: rows.start,
            rpm: self.rpm[r.clone()].to_vec(),
            i: self.i[r].to_vec(),
        })
    }

    /// Mean of the rpm and current r² against `frame` over the predicted rows.
    pub fn mean_r2(&self, frame: &TimeSeriesFrame) -> Result<f64> {
        let rows = self.first_row..self.first_row + self.len();
        if rows.end > frame.len() {
            return Err(FddError::Data("prediction extends past the frame".into()));
        }
        mean_r2(&[
            (&frame.channel(Channel::Rpm)[rows.clone()], &self.rpm),
            (&frame.channel(Channel::I)[rows], &self.i),
        ])
    }
}

fn unscale(out_sc: &ScalerParams, first_row: usize, ys: &[Vec<f64>]) -> Prediction {
    Prediction {
        first_row,
        rpm: ys.iter().map(|y| out_sc.inverse_one(0, y[0])).collect(),
        i: ys.iter().map(|y| out_sc.inverse_one(1, y[1])).collect(),
    }
}

fn regressor_parts(model: &TrainedModel) -> Result<(&RegressorSpec, &ScalerParams)> {
    match (&model.spec, &model.target_scaler) {
        (ModelSpec::Regressor(spec), Some(sc)) => Ok((spec, sc)),
        _ => Err(FddError::Data("model is not a regressor".into())),
    }
}

/// One-step-ahead predictions from measured history, for rows
/// `warmup .. frame.len()`.
pub fn predict_series_parallel(model: &TrainedModel, frame: &TimeSeriesFrame) -> Result<Prediction> {
    let (spec, out_sc) = regressor_parts(model)?;
    frame.validate()?;
    let warm = spec.warmup();
    if frame.len() <= warm {
        return Err(FddError::Data(format!(
            "frame of {} samples is not longer than the {warm}-sample warm-up",
            frame.len()
        )));
    }
    let raw_in = spec.input_columns(frame.channel(Channel::U), frame.channel(Channel::V))?;
    let outputs = [frame.channel(Channel::Rpm), frame.channel(Channel::I)];
    let scaled = Scaled::new(&raw_in, outputs, &model.input_scaler, out_sc);
    let ys = scaled.predict(spec, &model.network, warm..frame.len())?;
    Ok(unscale(out_sc, warm, &ys))
}

/// Free-running predictions for rows `h .. u.len()` where `h` is the history
/// length. NARX models feed back their own outputs after the measured
/// history; other models ignore the history values.
pub fn predict_parallel(
    model: &TrainedModel,
    u: &[f64],
    v: &[f64],
    rpm_history: &[f64],
    i_history: &[f64],
) -> Result<Prediction> {
    let (spec, out_sc) = regressor_parts(model)?;
    let n = u.len();
    let h = rpm_history.len();
    if v.len() != n || i_history.len() != h {
        return Err(FddError::Data("input channels or history channels differ in length".into()));
    }
    if h < spec.warmup() {
        return Err(FddError::Data(format!("history of {h} samples is shorter than the warm-up {}", spec.warmup())));
    }
    if h >= n {
        return Err(FddError::Data(format!("history of {h} samples leaves nothing to predict in {n}")));
    }
    let raw_in = spec.input_columns(u, v)?;
    let net = &model.network;
    if !spec.kind.is_narx() {
        let zeros = vec![0.0; n];
        let scaled = Scaled::new(&raw_in, [&zeros, &zeros], &model.input_scaler, out_sc);
        let ys = scaled.predict(spec, net, h..n)?;
        return Ok(unscale(out_sc, h, &ys));
    }
    let mut scaled = Scaled::new(&raw_in, [rpm_history, i_history], &model.input_scaler, out_sc);
    let zero = net.initial_state();
    let mut ys = Vec::with_capacity(n - h);
    for t in h..n {
        let (y, _) = net.step(&scaled.step_input(spec, t), &zero)?;
        if let Some(m) = y.iter().map(|v| v.abs()).find(|m| !(*m <= DIVERGENCE_LIMIT)) {
            return Err(FddError::Instability { step: t, magnitude: m });
        }
        scaled.outputs[0].push(y[0]);
        scaled.outputs[1].push(y[1]);
        ys.push(y);
    }
    Ok(unscale(out_sc, h, &ys))
}

/// [`predict_parallel`] seeded with the frame's first `warmup` measured
/// outputs.
pub fn predict_parallel_frame(model: &TrainedModel, frame: &TimeSeriesFrame) -> Result<Prediction> {
    let (spec, _) = regressor_parts(model)?;
    frame.validate()?;
    let h = spec.warmup();
    predict_parallel(
        model,
        frame.channel(Channel::U),
        frame.channel(Channel::V),
        &frame.channel(Channel::Rpm)[..h],
        &frame.channel(Channel::I)[..h],
    )
}
