//! The end-to-end protocol: simulate every condition, identify the nominal
//! model, score all regressors across frequencies, generate residuals and
//! compare raw-signal and residual classifiers on a held-out test set.

use std::ops::Range;

use rayon::prelude::*;

use super::metrics::confusion_matrix;
use super::report::{
    BenchmarkRun, ClassifierResult, DiagnosisReport, HeadlineConfusion, PlotData, PredictionTrace, Provenance, RegressorResult,
    ResidualSummary, Role,
};
use super::residuals::{compute_residuals, ResidualSeries};
use crate::config::BenchmarkConfig;
use crate::error::{FddError, Result};
use crate::frame::TimeSeriesFrame;
use crate::models::regressor::predict_parallel_frame;
use crate::models::{
    predict_classes, predict_series_parallel, train_classifier, train_regressor, ClassifierData, ClassifierSpec, FeatureMode,
    RegressorKind, RegressorSpec, TrainConfig, TrainedModel,
};
use crate::plant::{simulate_with_table, FaultCondition, InputSignal};
use crate::preprocess::SplitSpec;
use crate::rng::derive_seed;

/// A simulated record with the seed that produced it.
#[derive(Debug, Clone)]
pub struct Recording {
    pub name: String,
    pub seed: u64,
    pub frame: TimeSeriesFrame,
}

fn record(cfg: &BenchmarkConfig, name: String, condition: FaultCondition, freq_hz: f64, samples: usize) -> Result<Recording> {
    let seed = derive_seed(cfg.seed, &format!("sim/{name}"));
    let duration = samples as f64 / cfg.plant.sample_rate_hz;
    let frame = simulate_with_table(&InputSignal::sine(freq_hz, duration), condition, &cfg.faults, &cfg.plant, seed)
        .map_err(|e| e.in_stage(format!("simulate {name}")))?;
    if frame.len() != samples {
        return Err(FddError::Data(format!("{name}: simulated {} samples, wanted {samples}", frame.len())).in_stage("simulate"));
    }
    Ok(Recording { name, seed, frame })
}

fn regressor_spec(cfg: &BenchmarkConfig, preset: &str) -> Result<RegressorSpec> {
    let kind: RegressorKind = preset.parse()?;
    let mut spec = RegressorSpec::preset_for(kind, &cfg.plant);
    spec.train = TrainConfig {
        epochs: cfg.regressor_epochs,
        patience: cfg.regressor_patience,
        learning_rate: cfg.learning_rate,
        ..spec.train
    };
    Ok(spec)
}

fn classifier_spec(cfg: &BenchmarkConfig, preset: &str, batch_size: usize) -> Result<ClassifierSpec> {
    let mut spec = ClassifierSpec::preset(preset)?;
    spec.batch_size = batch_size;
    spec.train = TrainConfig {
        epochs: cfg.classifier_epochs,
        patience: cfg.classifier_patience,
        learning_rate: cfg.learning_rate,
        ..spec.train
    };
    Ok(spec)
}

/// Raw and residual feature sets over the same rows of a group of
/// per-condition recordings.
struct FeatureSets {
    raw: ClassifierData,
    residual: ClassifierData,
    /// Frame rows each recording contributes.
    rows: Vec<Range<usize>>,
}

fn feature_sets(recs: &[Recording], residuals: &[ResidualSeries]) -> FeatureSets {
    let (mut raw, mut res, mut labels, mut recordings, mut rows) = (vec![], vec![], vec![], vec![], vec![]);
    for (rec, r) in recs.iter().zip(residuals) {
        let f = &rec.frame;
        let start = raw.len();
        for k in 0..r.len() {
            let t = r.first_row + k;
            raw.push(vec![f.u[t], f.v[t], f.rpm[t], f.i[t]]);
            res.push(vec![r.r_rpm[k], r.r_i[k]]);
            labels.push(r.label.expect("benchmark recordings are labeled"));
        }
        recordings.push(start..raw.len());
        rows.push(r.first_row..r.first_row + r.len());
    }
    FeatureSets {
        raw: ClassifierData {
            features: raw,
            labels: labels.clone(),
            recordings: recordings.clone(),
        },
        residual: ClassifierData {
            features: res,
            labels,
            recordings,
        },
        rows,
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        FddError::Stage { .. } => e,
        e => e.in_stage(name),
    })
}

/// Runs the full protocol. Output depends only on `cfg`.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkRun> {
    stage("config", cfg.validate())?;
    let nominal_spec = stage("config", regressor_spec(cfg, &cfg.nominal_preset))?;
    let regressor_specs: Vec<RegressorSpec> = stage("config", cfg.regressors.iter().map(|p| regressor_spec(cfg, p)).collect())?;
    let warm = regressor_specs.iter().map(RegressorSpec::warmup).chain([nominal_spec.warmup()]).max().unwrap_or(0);
    let class_warm = nominal_spec.warmup();
    let mut prov = Provenance::default();

    // Simulation.
    log::info!("simulating datasets");
    let train = record(cfg, "nominal-train".into(), FaultCondition::Nominal15V, cfg.train_freq_hz, cfg.train_samples)?;
    let tests: Vec<Recording> = cfg
        .test_freqs_hz
        .par_iter()
        .map(|&f| record(cfg, format!("test-{f}Hz"), FaultCondition::Nominal15V, f, warm + cfg.test_samples))
        .collect::<Result<_>>()?;
    let test_counts = cfg.class_test_counts();
    let class_train: Vec<Recording> = FaultCondition::ALL
        .par_iter()
        .map(|&c| record(cfg, format!("class-train/{c}"), c, cfg.class_freq_hz, class_warm + cfg.class_train_samples))
        .collect::<Result<_>>()?;
    let class_test: Vec<Recording> = FaultCondition::ALL
        .par_iter()
        .map(|&c| record(cfg, format!("class-test/{c}"), c, cfg.class_freq_hz, class_warm + test_counts[c.index()]))
        .collect::<Result<_>>()?;

    // Regressors, all trained on the same nominal record.
    log::info!("training {} regressors", regressor_specs.len());
    let split = SplitSpec { k: cfg.regressor_folds };
    let train_one = |spec: &RegressorSpec| {
        let name = spec.kind.preset_name();
        stage(
            &format!("train-regressor {name}"),
            train_regressor(spec, &train.frame, split, derive_seed(cfg.seed, &format!("regressor/{name}"))),
        )
    };
    let models: Vec<TrainedModel> = regressor_specs.par_iter().map(train_one).collect::<Result<_>>()?;
    let nominal = match regressor_specs.iter().position(|s| *s == nominal_spec) {
        Some(k) => models[k].clone(),
        None => train_one(&nominal_spec)?,
    };
    let n_train = train.frame.len();
    prov.add("train-regressors", &train, Role::Train, 0..n_train);
    prov.add("train-regressors", &train, Role::Scaler, 0..n_train);

    // r² per frequency in both prediction modes, over the rows after the
    // longest warm-up so every model is scored on the same samples.
    log::info!("scoring regressors");
    let eval_rows = warm..warm + cfg.test_samples;
    let mut regressors = Vec::with_capacity(models.len());
    for (spec, model) in regressor_specs.iter().zip(&models) {
        let name = spec.kind.preset_name();
        let scores: Vec<(f64, f64)> = tests
            .par_iter()
            .map(|rec| {
                stage(&format!("evaluate-regressor {name} on {}", rec.name), {
                    let par = predict_parallel_frame(model, &rec.frame).and_then(|p| p.window(eval_rows.clone()));
                    let sp = predict_series_parallel(model, &rec.frame).and_then(|p| p.window(eval_rows.clone()));
                    par.and_then(|p| p.mean_r2(&rec.frame))
                        .and_then(|a| Ok((a, sp?.mean_r2(&rec.frame)?)))
                })
            })
            .collect::<Result<_>>()?;
        regressors.push(RegressorResult {
            preset: name.to_string(),
            method: spec.kind.label().to_string(),
            layout: spec.layout.to_string(),
            batch_size: spec.batch_size,
            cv_score: model.cv_score(),
            epochs_trained: model.history.len(),
            parallel: scores.iter().map(|s| s.0).collect(),
            series_parallel: scores.iter().map(|s| s.1).collect(),
        });
    }
    for rec in &tests {
        prov.add("evaluate-regressors", rec, Role::Test, eval_rows.clone());
    }

    // Residuals against the free-running nominal model.
    log::info!("computing residuals");
    let residuals_of = |recs: &[Recording]| -> Result<Vec<ResidualSeries>> {
        recs.par_iter()
            .map(|rec| stage(&format!("residuals {}", rec.name), compute_residuals(&nominal, &rec.frame)))
            .collect()
    };
    let train_res = residuals_of(&class_train)?;
    let test_res = residuals_of(&class_test)?;
    let train_sets = feature_sets(&class_train, &train_res);
    let test_sets = feature_sets(&class_test, &test_res);
    for (rec, rows) in class_train.iter().zip(&train_sets.rows) {
        prov.add("train-classifiers", rec, Role::Train, rows.clone());
        prov.add("train-classifiers", rec, Role::Scaler, rows.clone());
    }
    for (rec, rows) in class_test.iter().zip(&test_sets.rows) {
        prov.add("evaluate-classifiers", rec, Role::Test, rows.clone());
    }

    // Classifiers. Feature modes sharing a kind and batch size share a seed.
    log::info!("training {} classifiers", cfg.classifiers.len());
    let csplit = SplitSpec { k: cfg.classifier_folds };
    let classifiers: Vec<ClassifierResult> = cfg
        .classifiers
        .par_iter()
        .map(|row| {
            let spec = stage("config", classifier_spec(cfg, &row.preset, row.batch_size))?;
            let label = format!("{}:{}", spec.name(), row.batch_size);
            let (tr, te) = match spec.features {
                FeatureMode::All => (&train_sets.raw, &test_sets.raw),
                FeatureMode::Residuals => (&train_sets.residual, &test_sets.residual),
            };
            let kind = format!("{:?}", spec.kind).to_lowercase();
            let seed = derive_seed(cfg.seed, &format!("classifier/{kind}/batch{}", row.batch_size));
            let model = stage(&format!("train-classifier {label}"), train_classifier(&spec, tr, csplit, seed))?;
            let pred = stage(
                &format!("evaluate-classifier {label}"),
                predict_classes(&model, &te.features, &te.recordings),
            )?;
            let cm = stage(&format!("evaluate-classifier {label}"), confusion_matrix(&te.labels, &pred))?;
            Ok(ClassifierResult {
                name: spec.name(),
                preset: row.preset.clone(),
                batch_size: row.batch_size,
                layout: spec.layout.to_string(),
                cv_accuracy: model.cv_score(),
                test_accuracy: cm.accuracy(),
                epochs_trained: model.history.len(),
                confusion: cm,
            })
        })
        .collect::<Result<_>>()?;

    let headline = HeadlineConfusion::select(&classifiers);
    let residual_summary = test_res.iter().map(ResidualSummary::of).collect();
    let report = DiagnosisReport {
        seed: cfg.seed,
        config: cfg.to_kv().iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        classes: FaultCondition::ALL.iter().map(|c| c.name().to_string()).collect(),
        frequencies_hz: cfg.test_freqs_hz.clone(),
        nominal_model: cfg.nominal_preset.clone(),
        regressors,
        residuals: residual_summary,
        classifiers,
        confusion: headline,
        provenance: prov,
    };
    stage("report", report.validate())?;

    let predictions = tests
        .iter()
        .map(|rec| {
            let par = predict_parallel_frame(&nominal, &rec.frame)?.window(eval_rows.clone())?;
            let sp = predict_series_parallel(&nominal, &rec.frame)?.window(eval_rows.clone())?;
            Ok(PredictionTrace {
                name: rec.name.clone(),
                frame: rec.frame.slice(eval_rows.clone()),
                parallel: par,
                series_parallel: sp,
            })
        })
        .collect::<Result<_>>();
    let plots = PlotData {
        scatter: class_train
            .iter()
            .zip(&train_sets.rows)
            .map(|(rec, rows)| (rec.frame.slice(rows.clone()), rec.name.clone()))
            .collect(),
        residuals: test_res,
        predictions: stage("report", predictions)?,
    };
    Ok(BenchmarkRun { report, plots })
}
