//! Benchmark report, its CSV tables and the plot-data files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmark::Recording;
use super::metrics::ConfusionMatrix;
use super::residuals::ResidualSeries;
use crate::error::{FddError, Result};
use crate::frame::{fmt_f64, Channel, TimeSeriesFrame};
use crate::models::Prediction;
use crate::plant::FaultCondition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorResult {
    pub preset: String,
    pub method: String,
    pub layout: String,
    pub batch_size: usize,
    pub cv_score: f64,
    pub epochs_trained: usize,
    /// Mean r² per test frequency, free-running.
    pub parallel: Vec<f64>,
    /// Mean r² per test frequency, one step ahead from measured outputs.
    pub series_parallel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    /// `MLP_res` style name.
    pub name: String,
    pub preset: String,
    pub batch_size: usize,
    pub layout: String,
    pub cv_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_trained: usize,
    pub confusion: ConfusionMatrix,
}

/// The confusion matrix shown on its own: the most accurate residual MLP,
/// or the most accurate classifier when no residual MLP ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineConfusion {
    /// Index into `DiagnosisReport::classifiers`.
    pub classifier: Option<usize>,
    pub normalized: [[f64; FaultCondition::COUNT]; FaultCondition::COUNT],
}

impl HeadlineConfusion {
    pub fn select(results: &[ClassifierResult]) -> Self {
        let best = |pred: &dyn Fn(&ClassifierResult) -> bool| {
            results
                .iter()
                .enumerate()
                .filter(|(_, r)| pred(r))
                .fold(None, |acc: Option<(usize, f64)>, (k, r)| match acc {
                    Some((_, a)) if a >= r.test_accuracy => acc,
                    _ => Some((k, r.test_accuracy)),
                })
                .map(|(k, _)| k)
        };
        let pick = best(&|r| r.name == "MLP_res").or_else(|| best(&|_| true));
        HeadlineConfusion {
            classifier: pick,
            normalized: pick.map_or([[0.0; 6]; 6], |k| results[k].confusion.normalized),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub condition: FaultCondition,
    pub samples: usize,
    pub mean_rpm: f64,
    pub mean_i: f64,
    pub rms_rpm: f64,
    pub rms_i: f64,
}

impl ResidualSummary {
    pub fn of(r: &ResidualSeries) -> Self {
        ResidualSummary {
            condition: r.label.unwrap_or(FaultCondition::Nominal15V),
            samples: r.len(),
            mean_rpm: ResidualSeries::mean(&r.r_rpm),
            mean_i: ResidualSeries::mean(&r.r_i),
            rms_rpm: ResidualSeries::rms(&r.r_rpm),
            rms_i: ResidualSeries::rms(&r.r_i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Train,
    Scaler,
    Test,
}

/// Which rows of which simulated record a stage touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub stage: String,
    pub recording: String,
    pub seed: u64,
    pub role: Role,
    pub rows: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub entries: Vec<ProvenanceEntry>,
}

impl Provenance {
    pub fn add(&mut self, stage: &str, rec: &Recording, role: Role, rows: Range<usize>) {
        self.entries.push(ProvenanceEntry {
            stage: stage.to_string(),
            recording: rec.name.clone(),
            seed: rec.seed,
            role,
            rows,
        });
    }

    /// Fails if a test sample also fed training or scaler fitting, either
    /// through shared rows of one record or through two records drawn from
    /// the same seed.
    pub fn check(&self) -> Result<()> {
        let fitted = self.entries.iter().filter(|e| e.role != Role::Test);
        for test in self.entries.iter().filter(|e| e.role == Role::Test) {
            for fit in fitted.clone() {
                let same_record = fit.recording == test.recording;
                let overlap = fit.rows.start < test.rows.end && test.rows.start < fit.rows.end;
                if (same_record && overlap) || (!same_record && fit.seed == test.seed) {
                    return Err(FddError::Data(format!(
                        "test rows {:?} of {} leak into {} ({:?})",
                        test.rows, test.recording, fit.stage, fit.role
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub seed: u64,
    /// Effective configuration as key/value pairs.
    pub config: BTreeMap<String, String>,
    pub classes: Vec<String>,
    pub frequencies_hz: Vec<f64>,
    pub nominal_model: String,
    pub regressors: Vec<RegressorResult>,
    /// Test-set residual statistics per condition.
    pub residuals: Vec<ResidualSummary>,
    pub classifiers: Vec<ClassifierResult>,
    pub confusion: HeadlineConfusion,
    pub provenance: Provenance,
}

impl DiagnosisReport {
    pub fn validate(&self) -> Result<()> {
        self.provenance.check()?;
        for r in &self.regressors {
            if r.parallel.len() != self.frequencies_hz.len() || r.series_parallel.len() != self.frequencies_hz.len() {
                return Err(FddError::Shape(format!("r² row of {} has the wrong width", r.preset)));
            }
        }
        for c in &self.classifiers {
            for (k, row) in c.confusion.normalized.iter().enumerate() {
                let s: f64 = row.iter().sum();
                let supported = !c.confusion.unsupported.contains(&FaultCondition::ALL[k]);
                if supported && (s - 1.0).abs() > 1e-9 {
                    return Err(FddError::Data(format!("confusion row {k} of {} sums to {s}", c.name)));
                }
            }
        }
        Ok(())
    }

    pub fn regressor(&self, preset: &str) -> Option<&RegressorResult> {
        self.regressors.iter().find(|r| r.preset == preset)
    }

    pub fn classifier(&self, preset: &str, batch_size: usize) -> Option<&ClassifierResult> {
        self.classifiers
            .iter()
            .find(|c| c.preset == preset && c.batch_size == batch_size)
    }

    pub fn headline(&self) -> Option<&ClassifierResult> {
        self.confusion.classifier.map(|k| &self.classifiers[k])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_r2_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["method".to_string(), "preset".into(), "mode".into()];
        header.extend(self.frequencies_hz.iter().map(|f| format!("r2_{f}Hz")));
        w.write_record(&header)?;
        for r in &self.regressors {
            for (mode, xs) in [("parallel", &r.parallel), ("series-parallel", &r.series_parallel)] {
                let mut rec = vec![r.method.clone(), r.preset.clone(), mode.to_string()];
                rec.extend(xs.iter().map(|x| fmt_f64(*x)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_accuracy_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["method", "preset", "batch_size", "hidden_layers", "epochs", "cv_accuracy", "test_accuracy"])?;
        for c in &self.classifiers {
            w.write_record([
                c.name.clone(),
                c.preset.clone(),
                c.batch_size.to_string(),
                c.layout.clone(),
                c.epochs_trained.to_string(),
                fmt_f64(c.cv_accuracy),
                fmt_f64(c.test_accuracy),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json`, the three tables and the plot data into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_r2_csv(fs::File::create(dir.join("r2_scores.csv"))?)?;
        self.write_accuracy_csv(fs::File::create(dir.join("accuracy.csv"))?)?;
        write_confusion_csv(&self.confusion.normalized, fs::File::create(dir.join("confusion.csv"))?)?;
        Ok(())
    }
}

/// Normalized matrix with a header of predicted classes and one row per
/// true class.
pub fn write_confusion_csv<W: Write>(m: &[[f64; FaultCondition::COUNT]; FaultCondition::COUNT], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(FaultCondition::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for (c, row) in FaultCondition::ALL.iter().zip(m) {
        let mut rec = vec![c.name().to_string()];
        rec.extend(row.iter().map(|x| fmt_f64(*x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Free-running and one-step predictions of the nominal model on a test record.
#[derive(Debug, Clone)]
pub struct PredictionTrace {
    pub name: String,
    pub frame: TimeSeriesFrame,
    pub parallel: Prediction,
    pub series_parallel: Prediction,
}

#[derive(Debug, Clone)]
pub struct PlotData {
    /// Classifier training records, for signal scatter plots.
    pub scatter: Vec<(TimeSeriesFrame, String)>,
    /// Test-set residual traces per condition.
    pub residuals: Vec<ResidualSeries>,
    pub predictions: Vec<PredictionTrace>,
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect()
}

impl PlotData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let dir = dir.join("plots");
        fs::create_dir_all(&dir)?;
        for (frame, name) in &self.scatter {
            frame.save_csv(dir.join(format!("scatter_{}.csv", file_stem(name))))?;
        }
        for r in &self.residuals {
            let name = r.label.map_or("unlabeled", |l| l.name());
            r.save_csv(dir.join(format!("residuals_{name}.csv")))?;
        }
        for p in &self.predictions {
            let mut w = csv::Writer::from_path(dir.join(format!("prediction_{}.csv", file_stem(&p.name))))?;
            w.write_record(["t", "u", "rpm", "rpm_parallel", "rpm_series_parallel", "i", "i_parallel", "i_series_parallel"])?;
            let f = &p.frame;
            for k in 0..f.len() {
                w.write_record([
                    fmt_f64(f.t[k]),
                    fmt_f64(f.u[k]),
                    fmt_f64(f.channel(Channel::Rpm)[k]),
                    fmt_f64(p.parallel.rpm[k]),
                    fmt_f64(p.series_parallel.rpm[k]),
                    fmt_f64(f.channel(Channel::I)[k]),
                    fmt_f64(p.parallel.i[k]),
                    fmt_f64(p.series_parallel.i[k]),
                ])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: DiagnosisReport,
    pub plots: PlotData,
}

impl BenchmarkRun {
    /// Writes the full report directory. The output is a pure function of
    /// the configuration.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.report.write_tables(dir)?;
        let cfg: String = self.report.config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        fs::write(dir.join("config.cfg"), cfg)?;
        self.plots.write(dir)
    }
}
