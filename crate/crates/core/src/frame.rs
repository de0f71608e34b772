use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::plant::FaultCondition;

pub const CSV_HEADER: [&str; 6] = ["t", "u", "v", "rpm", "i", "label"];

/// Uniformly sampled record of one thruster run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesFrame {
    pub t: Vec<f64>,
    /// Normalized control input in [-1, 1].
    pub u: Vec<f64>,
    /// Supply voltage, V.
    pub v: Vec<f64>,
    pub rpm: Vec<f64>,
    /// Motor current, A.
    pub i: Vec<f64>,
    pub labels: Option<Vec<FaultCondition>>,
}

/// Signal channels addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    U,
    V,
    Rpm,
    I,
}

impl Channel {
    pub const INPUTS: [Channel; 2] = [Channel::U, Channel::V];
    pub const OUTPUTS: [Channel; 2] = [Channel::Rpm, Channel::I];
    pub const ALL: [Channel; 4] = [Channel::U, Channel::V, Channel::Rpm, Channel::I];

    pub fn name(self) -> &'static str {
        match self {
            Channel::U => "u",
            Channel::V => "v",
            Channel::Rpm => "rpm",
            Channel::I => "i",
        }
    }
}

impl TimeSeriesFrame {
    pub fn new(
        t: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        rpm: Vec<f64>,
        i: Vec<f64>,
        labels: Option<Vec<FaultCondition>>,
    ) -> Result<Self> {
        let frame = TimeSeriesFrame { t, u, v, rpm, i, labels };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if n == 0 {
            return Err(FddError::Data("frame is empty".into()));
        }
        let lens = [self.u.len(), self.v.len(), self.rpm.len(), self.i.len()];
        if lens.iter().any(|&l| l != n) || self.labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(FddError::Data(format!("channel lengths differ (t has {n})")));
        }
        if n > 1 {
            let dt = self.t[1] - self.t[0];
            if !(dt > 0.0) {
                return Err(FddError::Data("time must be strictly increasing".into()));
            }
            let tol = 1e-6 * dt.max(1.0);
            for k in 1..n {
                let expected = self.t[0] + k as f64 * dt;
                if !(self.t[k] > self.t[k - 1]) || (self.t[k] - expected).abs() > tol * k as f64 {
                    return Err(FddError::Data(format!("non-uniform time grid at row {k}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        (self.len() > 1).then(|| 1.0 / (self.t[1] - self.t[0]))
    }

    pub fn channel(&self, ch: Channel) -> &[f64] {
        match ch {
            Channel::U => &self.u,
            Channel::V => &self.v,
            Channel::Rpm => &self.rpm,
            Channel::I => &self.i,
        }
    }

    pub fn channel_mut(&mut self, ch: Channel) -> &mut Vec<f64> {
        match ch {
            Channel::U => &mut self.u,
            Channel::V => &mut self.v,
            Channel::Rpm => &mut self.rpm,
            Channel::I => &mut self.i,
        }
    }

    /// Rows `range`, with time kept as is.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeriesFrame {
        TimeSeriesFrame {
            t: self.t[range.clone()].to_vec(),
            u: self.u[range.clone()].to_vec(),
            v: self.v[range.clone()].to_vec(),
            rpm: self.rpm[range.clone()].to_vec(),
            i: self.i[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    /// Joins frames end to end on a fresh uniform grid starting at zero.
    pub fn concat(frames: &[TimeSeriesFrame], sample_rate_hz: f64) -> Result<TimeSeriesFrame> {
        if frames.is_empty() {
            return Err(FddError::Data("nothing to concatenate".into()));
        }
        let labelled = frames.iter().all(|f| f.labels.is_some());
        let mut out = TimeSeriesFrame {
            t: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            rpm: Vec::new(),
            i: Vec::new(),
            labels: labelled.then(Vec::new),
        };
        for f in frames {
            out.u.extend_from_slice(&f.u);
            out.v.extend_from_slice(&f.v);
            out.rpm.extend_from_slice(&f.rpm);
            out.i.extend_from_slice(&f.i);
            if let (Some(dst), Some(src)) = (out.labels.as_mut(), f.labels.as_ref()) {
                dst.extend_from_slice(src);
            }
        }
        out.t = (0..out.u.len()).map(|k| k as f64 / sample_rate_hz).collect();
        out.validate()?;
        Ok(out)
    }

    /// Maximal runs of rows sharing one label, as (label, row range).
    pub fn label_segments(&self) -> Vec<(Option<FaultCondition>, std::ops::Range<usize>)> {
        let Some(labels) = self.labels.as_ref() else {
            return vec![(None, 0..self.len())];
        };
        let mut segs = Vec::new();
        let mut start = 0;
        for k in 1..=labels.len() {
            if k == labels.len() || labels[k] != labels[start] {
                segs.push((Some(labels[start]), start..k));
                start = k;
            }
        }
        segs
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for k in 0..self.len() {
            let label = self.labels.as_ref().map_or("", |l| l[k].name());
            w.write_record([
                fmt_f64(self.t[k]),
                fmt_f64(self.u[k]),
                fmt_f64(self.v[k]),
                fmt_f64(self.rpm[k]),
                fmt_f64(self.i[k]),
                label.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().map(str::trim).ne(CSV_HEADER) {
            return Err(FddError::Data(format!(
                "unexpected CSV header `{}`, expected `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                CSV_HEADER.join(",")
            )));
        }
        let mut cols: [Vec<f64>; 5] = Default::default();
        let mut labels = Vec::new();
        let mut any_label = false;
        let mut all_label = true;
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            for (c, col) in cols.iter_mut().enumerate() {
                let field = rec.get(c).unwrap_or("").trim();
                let x: f64 = field
                    .parse()
                    .map_err(|_| FddError::Data(format!("row {}: bad number `{field}`", row + 1)))?;
                if !x.is_finite() {
                    return Err(FddError::Data(format!("row {}: non-finite value", row + 1)));
                }
                col.push(x);
            }
            let label = rec.get(5).unwrap_or("").trim();
            if label.is_empty() {
                all_label = false;
            } else {
                any_label = true;
                labels.push(label.parse::<FaultCondition>()?);
            }
        }
        if any_label && !all_label {
            return Err(FddError::Data("label column is only partially filled".into()));
        }
        let [t, u, v, rpm, i] = cols;
        TimeSeriesFrame::new(t, u, v, rpm, i, any_label.then_some(labels))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Seventeen significant digits: exact round trip through text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
