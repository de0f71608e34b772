//! Scaling, tapped delay lines, static input nonlinearities and
//! forward-chaining splits.

use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::frame::{Channel, TimeSeriesFrame};
use crate::plant::deadband_shift;

/// Per-column median / interquartile-range scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
    /// Columns whose IQR was zero and fell back to 1.0.
    pub fallback: Vec<bool>,
}

/// Quantile by linear interpolation between order statistics of `sorted`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

impl ScalerParams {
    pub fn fit(columns: &[&[f64]]) -> Result<Self> {
        let mut median = Vec::with_capacity(columns.len());
        let mut iqr = Vec::with_capacity(columns.len());
        let mut fallback = Vec::with_capacity(columns.len());
        for (c, col) in columns.iter().enumerate() {
            if col.len() < 4 {
                return Err(FddError::Data(format!(
                    "column {c} has {} samples; scaling needs at least 4",
                    col.len()
                )));
            }
            if col.iter().any(|x| !x.is_finite()) {
                return Err(FddError::Data(format!("column {c} contains non-finite values")));
            }
            let mut sorted = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            let spread = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            median.push(quantile_sorted(&sorted, 0.5));
            if spread > 0.0 {
                iqr.push(spread);
                fallback.push(false);
            } else {
                log::warn!("column {c} has zero interquartile range; using unit scale");
                iqr.push(1.0);
                fallback.push(true);
            }
        }
        Ok(ScalerParams { median, iqr, fallback })
    }

    /// Fit on rows `rows` of the given frame channels only.
    pub fn fit_rows(frame: &TimeSeriesFrame, channels: &[Channel], rows: std::ops::Range<usize>) -> Result<Self> {
        let cols: Vec<&[f64]> = channels.iter().map(|&c| &frame.channel(c)[rows.clone()]).collect();
        Self::fit(&cols)
    }

    pub fn width(&self) -> usize {
        self.median.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.median.len();
        if self.iqr.len() != n || self.fallback.len() != n {
            return Err(FddError::Shape("scaler vectors differ in length".into()));
        }
        if self.iqr.iter().any(|&q| !(q > 0.0) || !q.is_finite()) || self.median.iter().any(|m| !m.is_finite()) {
            return Err(FddError::Shape("scaler holds non-positive or non-finite entries".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn transform_one(&self, col: usize, x: f64) -> f64 {
        (x - self.median[col]) / self.iqr[col]
    }

    #[inline]
    pub fn inverse_one(&self, col: usize, z: f64) -> f64 {
        z * self.iqr[col] + self.median[col]
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(c, &x)| self.transform_one(c, x)).collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(c, &z)| self.inverse_one(c, z)).collect()
    }

    pub fn transform_column(&self, col: usize, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform_one(col, x)).collect()
    }

    pub fn inverse_column(&self, col: usize, zs: &[f64]) -> Vec<f64> {
        zs.iter().map(|&z| self.inverse_one(col, z)).collect()
    }
}

/// Fits one scaler column per requested channel over the whole frame.
pub fn fit_scaler(frame: &TimeSeriesFrame, channels: &[Channel]) -> Result<ScalerParams> {
    ScalerParams::fit_rows(frame, channels, 0..frame.len())
}

/// A tapped delay line: `delays` taps starting `offset` samples back,
/// i.e. lags `offset+1 ..= offset+delays`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tap {
    pub delays: usize,
    pub offset: usize,
}

impl Tap {
    pub const fn new(delays: usize, offset: usize) -> Self {
        Tap { delays, offset }
    }

    pub fn max_lag(&self) -> usize {
        if self.delays == 0 {
            0
        } else {
            self.offset + self.delays
        }
    }
}

/// Delay lines for the exogenous inputs and the fed-back outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub input: Tap,
    pub output: Tap,
}

impl DelaySpec {
    /// Largest lag touched when `with_outputs` includes the output taps.
    pub fn max_delay(&self, with_outputs: bool) -> usize {
        let o = if with_outputs { self.output.max_lag() } else { 0 };
        self.input.max_lag().max(o)
    }

    pub fn feature_width(&self, inputs: usize, outputs: usize, with_outputs: bool) -> usize {
        inputs * self.input.delays + if with_outputs { outputs * self.output.delays } else { 0 }
    }
}

/// Builds the lagged feature row that predicts time `t`.
pub fn lag_row(inputs: &[&[f64]], outputs: &[&[f64]], spec: &DelaySpec, with_outputs: bool, t: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(spec.feature_width(inputs.len(), outputs.len(), with_outputs));
    for sig in inputs {
        for lag in (spec.input.offset + 1)..=(spec.input.offset + spec.input.delays) {
            row.push(sig[t - lag]);
        }
    }
    if with_outputs {
        for sig in outputs {
            for lag in (spec.output.offset + 1)..=(spec.output.offset + spec.output.delays) {
                row.push(sig[t - lag]);
            }
        }
    }
    row
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// Series index of the first target row.
    pub first_row: usize,
}

/// Tapped-delay embedding of raw series. Row `r` predicts time
/// `first_row + r` from strictly earlier samples only.
pub fn embed_series(inputs: &[&[f64]], outputs: &[&[f64]], spec: &DelaySpec, targets_as_features: bool) -> Result<Embedding> {
    let n = inputs
        .iter()
        .chain(outputs)
        .map(|s| s.len())
        .min()
        .ok_or_else(|| FddError::Data("no signals to embed".into()))?;
    if inputs.iter().chain(outputs).any(|s| s.len() != n) {
        return Err(FddError::Data("signals differ in length".into()));
    }
    let first = spec.max_delay(targets_as_features);
    if n <= first {
        return Err(FddError::Data(format!("series of length {n} is not longer than the maximum delay {first}")));
    }
    let mut features = Vec::with_capacity(n - first);
    let mut targets = Vec::with_capacity(n - first);
    for t in first..n {
        features.push(lag_row(inputs, outputs, spec, targets_as_features, t));
        targets.push(outputs.iter().map(|s| s[t]).collect());
    }
    Ok(Embedding {
        features,
        targets,
        first_row: first,
    })
}

/// Embeds a frame with (u, v) as inputs and (rpm, i) as outputs.
pub fn tapped_delay_embed(frame: &TimeSeriesFrame, spec: &DelaySpec, targets_as_features: bool) -> Result<Embedding> {
    let inputs: Vec<&[f64]> = Channel::INPUTS.iter().map(|&c| frame.channel(c)).collect();
    let outputs: Vec<&[f64]> = Channel::OUTPUTS.iter().map(|&c| frame.channel(c)).collect();
    embed_series(&inputs, &outputs, spec, targets_as_features)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: std::ops::Range<usize>,
    pub validation: std::ops::Range<usize>,
}

/// Forward-chaining folds over `n` ordered samples.
///
/// Validation blocks have `n / (k + 1)` samples (floor); the remainder
/// extends the first training block. Fold `j` trains on everything before
/// its validation block.
pub fn ts_kfold(n: usize, spec: SplitSpec) -> Result<Vec<Fold>> {
    let k = spec.k;
    if k < 2 {
        return Err(FddError::Config(format!("need at least 2 folds, got {k}")));
    }
    if n < k + 2 {
        return Err(FddError::Config(format!("{n} samples are too few for {k} folds")));
    }
    let block = n / (k + 1);
    Ok((1..=k)
        .map(|j| {
            let train_end = n - (k + 1 - j) * block;
            Fold {
                train: 0..train_end,
                validation: train_end..train_end + block,
            }
        })
        .collect())
}

/// Rescaled dead zone: `|u| ≤ width ↦ 0`, otherwise `sign(u)(|u| − width)/(1 − width)`.
pub fn apply_deadband(u: &[f64], width: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&width) {
        return Err(FddError::Config(format!("deadband width must lie in [0, 1), got {width}")));
    }
    Ok(u.iter().map(|&x| deadband_shift(x, width)).collect())
}

/// Delays a series by `delay` samples, padding the front with its first value.
pub fn apply_deadtime(series: &[f64], delay: usize) -> Vec<f64> {
    let Some(&first) = series.first() else {
        return Vec::new();
    };
    (0..series.len())
        .map(|k| if k >= delay { series[k - delay] } else { first })
        .collect()
}
