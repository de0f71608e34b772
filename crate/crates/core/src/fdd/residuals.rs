//! Residuals of measured outputs against the free-running nominal model.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::frame::{fmt_f64, Channel, TimeSeriesFrame};
use crate::models::regressor::predict_parallel_frame;
use crate::models::TrainedModel;
use crate::plant::FaultCondition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub t: Vec<f64>,
    /// Measured minus predicted rotational speed, rpm.
    pub r_rpm: Vec<f64>,
    /// Measured minus predicted current, A.
    pub r_i: Vec<f64>,
    pub label: Option<FaultCondition>,
    /// Frame row of the first residual.
    pub first_row: usize,
}

impl ResidualSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.r_rpm.len() != n || self.r_i.len() != n {
            return Err(FddError::Shape("residual channels differ in length".into()));
        }
        if self.r_rpm.iter().chain(&self.r_i).any(|x| !x.is_finite()) {
            return Err(FddError::Data("residuals contain non-finite values".into()));
        }
        Ok(())
    }

    /// Feature rows `[r_rpm, r_i]`.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.r_rpm.iter().zip(&self.r_i).map(|(a, b)| vec![*a, *b]).collect()
    }

    pub fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    pub fn rms(xs: &[f64]) -> f64 {
        (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "r_rpm", "r_i", "label"])?;
        let label = self.label.map(|l| l.name()).unwrap_or("");
        for k in 0..self.len() {
            w.write_record([fmt_f64(self.t[k]), fmt_f64(self.r_rpm[k]), fmt_f64(self.r_i[k]), label.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// The single label shared by every row of `frame`, if it is labeled.
pub fn frame_label(frame: &TimeSeriesFrame) -> Result<Option<FaultCondition>> {
    match &frame.labels {
        None => Ok(None),
        Some(ls) => {
            let first = ls.first().copied();
            if ls.iter().any(|l| Some(*l) != first) {
                return Err(FddError::Data("frame mixes several conditions; split it first".into()));
            }
            Ok(first)
        }
    }
}

/// `measured − free-running prediction` for rows after the model warm-up,
/// in physical units.
pub fn compute_residuals(nominal: &TrainedModel, frame: &TimeSeriesFrame) -> Result<ResidualSeries> {
    if nominal.regressor_spec().is_none() {
        return Err(FddError::Data("residuals need a regressor as the nominal model".into()));
    }
    let label = frame_label(frame)?;
    let pred = predict_parallel_frame(nominal, frame)?;
    let rows = pred.first_row..frame.len();
    let rpm = &frame.channel(Channel::Rpm)[rows.clone()];
    let i = &frame.channel(Channel::I)[rows.clone()];
    let series = ResidualSeries {
        t: frame.t[rows.clone()].to_vec(),
        r_rpm: rpm.iter().zip(&pred.rpm).map(|(m, p)| m - p).collect(),
        r_i: i.iter().zip(&pred.i).map(|(m, p)| m - p).collect(),
        label,
        first_row: rows.start,
    };
    series.validate()?;
    Ok(series)
}
