use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use thruster_fdd::fdd::{compute_residuals, confusion_matrix, r2_score, ResidualSeries};
use thruster_fdd::models::grid::{regressor_grid, RegressorGrid};
use thruster_fdd::models::regressor::predict_parallel_frame;
use thruster_fdd::models::{
    predict_classes, predict_series_parallel, train_classifier, train_regressor, ClassifierData, ClassifierSpec,
    EpochRecord, RegressorSpec, TrainedModel,
};
use thruster_fdd::preprocess::SplitSpec;
use thruster_fdd::{BenchmarkConfig, FaultCondition, InputSignal, KeyValues, TimeSeriesFrame};

use crate::{
    BenchmarkArgs, ClassifierArg, ClassifyArgs, EvalArgs, EvalMode, Failure, FeatureArg, PlantArgs, ResidualsArgs,
    SignalKind, SimulateArgs, TrainArgs,
};

type Outcome = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(anyhow::anyhow!("input file {} does not exist", path.display()).into());
    }
    Ok(())
}

fn require_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(anyhow::anyhow!("output directory {} does not exist", dir.display()).into())
        }
        _ => Ok(()),
    }
}

fn load_frame(path: &Path) -> anyhow::Result<TimeSeriesFrame> {
    TimeSeriesFrame::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<TrainedModel> {
    TrainedModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn config_from(file: Option<&Path>, overrides: &[String]) -> Result<BenchmarkConfig, Failure> {
    let mut kv = match file {
        Some(p) => {
            require_file(p)?;
            KeyValues::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => KeyValues::default(),
    };
    for o in overrides {
        kv.set_assignment(o).map_err(usage)?;
    }
    BenchmarkConfig::from_kv(&kv).map_err(usage)
}

fn range(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let PlantArgs { config, overrides } = &a.plant;
    let cfg = config_from(config.as_deref(), overrides)?;
    let signal = match a.signal {
        SignalKind::Sine => InputSignal::Sinusoid {
            frequency_hz: a.freq.expect("clap requires --freq for sine"),
            amplitude: a.amplitude,
            phase_rad: 0.0,
            duration_s: a.duration,
        },
        SignalKind::Staircase => InputSignal::StepStaircase {
            amplitude_step: a.step,
            hold_s: a.hold,
            duration_s: a.duration,
        },
    };
    signal.validate().map_err(usage)?;
    require_parent(&a.output)?;
    let frame = thruster_fdd::plant::simulate_with_table(&signal, a.condition, &cfg.faults, &cfg.plant, a.seed)?;
    frame.save_csv(&a.output)?;

    println!(
        "{}: {} rows, {} s at {} Hz, condition {}",
        a.output.display(),
        frame.len(),
        a.duration,
        cfg.plant.sample_rate_hz,
        a.condition
    );
    for (name, col) in [("u", &frame.u), ("v", &frame.v), ("rpm", &frame.rpm), ("i", &frame.i)] {
        let (lo, hi) = range(col);
        println!("  {name:<4}[{lo:.4}, {hi:.4}]");
    }
    Ok(())
}

fn history_path(output: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
        output.with_file_name(format!("{stem}.history.csv"))
    })
}

fn write_history(model: &TrainedModel, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["phase", "epoch", "train_loss", "val_loss"])?;
    let mut rows = |phase: &str, h: &[EpochRecord]| -> anyhow::Result<()> {
        for e in h {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([phase, &e.epoch.to_string(), &e.train_loss.to_string(), &val])?;
        }
        Ok(())
    };
    for fold in &model.cv {
        rows(&format!("fold{}", fold.fold), &fold.history)?;
    }
    rows("final", &model.history)?;
    w.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> Outcome {
    if a.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    require_file(&a.data)?;
    if let Some(g) = &a.grid {
        require_file(g)?;
    }
    require_parent(&a.output)?;
    let split = SplitSpec { k: a.folds };
    let frame = load_frame(&a.data)?;

    if let Some(grid_path) = &a.grid {
        let text = fs::read_to_string(grid_path)?;
        let grid: RegressorGrid =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", grid_path.display())))?;
        let specs = grid.expand().map_err(usage)?;
        let ranked = regressor_grid(&specs, &frame, split, a.seed)?;
        let mut w = csv::Writer::from_path(&a.output)?;
        w.write_record(["rank", "index", "preset", "layout", "batch_size", "lookback", "epochs", "cv_r2", "error"])?;
        for r in &ranked {
            w.write_record([
                r.rank.to_string(),
                r.index.to_string(),
                r.spec.kind.to_string(),
                r.spec.layout.to_string(),
                r.spec.batch_size.to_string(),
                r.spec.lookback.to_string(),
                r.spec.train.epochs.to_string(),
                r.score.map(|s| s.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        println!("ranked {} grid points into {}", ranked.len(), a.output.display());
        if let Some(best) = ranked.first().filter(|r| r.score.is_some()) {
            println!("best: index {} ({} {}), cv r2 {}", best.index, best.spec.kind, best.spec.layout, best.score.unwrap());
        }
        return Ok(());
    }

    let preset = a.preset.as_deref().expect("clap requires --preset without --grid");
    let mut spec = RegressorSpec::preset(preset).map_err(usage)?;
    if let Some(e) = a.epochs {
        spec.train.epochs = e;
    }
    if let Some(p) = a.patience {
        spec.train.patience = p;
    }
    spec.train.validate().map_err(usage)?;
    let model = train_regressor(&spec, &frame, split, a.seed)?;
    model.save(&a.output)?;
    let hist = history_path(&a.output, a.history);
    write_history(&model, &hist)?;
    for fold in &model.cv {
        println!("fold {}: best epoch {}, validation r2 {}", fold.fold, fold.best_epoch, fold.score);
    }
    println!("cv r2 {}; final fit {} epochs", model.cv_score(), model.history.len());
    println!("wrote {} and {}", a.output.display(), hist.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Outcome {
    require_file(&a.model)?;
    require_file(&a.data)?;
    let model = load_model(&a.model)?;
    let frame = load_frame(&a.data)?;
    let mut pred = match a.mode {
        EvalMode::Parallel => predict_parallel_frame(&model, &frame)?,
        EvalMode::SeriesParallel => predict_series_parallel(&model, &frame)?,
    };
    if let Some(n) = a.rows {
        pred = pred.window(pred.first_row..pred.first_row + n)?;
    }
    let rows = pred.first_row..pred.first_row + pred.len();
    let r2_rpm = r2_score(&frame.rpm[rows.clone()], &pred.rpm)?;
    let r2_i = r2_score(&frame.i[rows.clone()], &pred.i)?;
    let mean = pred.mean_r2(&frame)?;
    println!("rows {}..{}", rows.start, rows.end);
    println!("r2_rpm {r2_rpm}");
    println!("r2_i {r2_i}");
    println!("r2_mean {mean}");
    Ok(())
}

pub fn residuals(a: ResidualsArgs) -> Outcome {
    require_file(&a.model)?;
    require_file(&a.data)?;
    require_parent(&a.output)?;
    let model = load_model(&a.model)?;
    let frame = load_frame(&a.data)?;
    let r = compute_residuals(&model, &frame)?;
    r.save_csv(&a.output)?;
    println!("{}: {} residual rows from row {}", a.output.display(), r.len(), r.first_row);
    println!(
        "  rpm mean {:.4} rms {:.4}; current mean {:.5} rms {:.5}",
        ResidualSeries::mean(&r.r_rpm),
        ResidualSeries::rms(&r.r_rpm),
        ResidualSeries::mean(&r.r_i),
        ResidualSeries::rms(&r.r_i)
    );
    Ok(())
}

/// Feature rows from labeled single-condition recordings.
fn features(paths: &[PathBuf], mode: FeatureArg, nominal: Option<&TrainedModel>) -> anyhow::Result<ClassifierData> {
    let (mut rows, mut labels, mut recordings) = (vec![], vec![], vec![]);
    for p in paths {
        let f = load_frame(p)?;
        let label: FaultCondition = match thruster_fdd::fdd::residuals::frame_label(&f)? {
            Some(l) => l,
            None => anyhow::bail!("{} has no label column", p.display()),
        };
        let start = rows.len();
        match (mode, nominal) {
            (FeatureArg::Residuals, Some(m)) => {
                let r = compute_residuals(m, &f).with_context(|| format!("residuals of {}", p.display()))?;
                rows.extend(r.features());
            }
            (FeatureArg::Residuals, None) => unreachable!("checked before loading"),
            (FeatureArg::All, m) => {
                let skip = match m {
                    Some(m) => compute_residuals(m, &f)?.first_row,
                    None => 0,
                };
                rows.extend((skip..f.len()).map(|t| vec![f.u[t], f.v[t], f.rpm[t], f.i[t]]));
            }
        }
        labels.resize(rows.len(), label);
        recordings.push(start..rows.len());
    }
    Ok(ClassifierData {
        features: rows,
        labels,
        recordings,
    })
}

pub fn classify(a: ClassifyArgs) -> Outcome {
    if a.features == FeatureArg::Residuals && a.nominal.is_none() {
        return Err(usage("--features residuals needs --nominal"));
    }
    if a.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let preset = match (a.kind, a.features) {
        (ClassifierArg::Mlp, FeatureArg::All) => "clf-mlp-all",
        (ClassifierArg::Mlp, FeatureArg::Residuals) => "clf-mlp-res",
        (ClassifierArg::Lstm, FeatureArg::All) => "clf-lstm-all",
        (ClassifierArg::Lstm, FeatureArg::Residuals) => "clf-lstm-res",
    };
    let mut spec = ClassifierSpec::preset(preset).map_err(usage)?;
    spec.batch_size = a.batch_size;
    spec.train.epochs = a.epochs;
    spec.train.patience = a.patience;
    spec.validate().map_err(usage)?;
    spec.train.validate().map_err(usage)?;
    for p in a.nominal.iter().chain(&a.train).chain(&a.test) {
        require_file(p)?;
    }
    require_parent(&a.output)?;
    if let Some(m) = &a.model_out {
        require_parent(m)?;
    }

    let nominal = a.nominal.as_deref().map(load_model).transpose()?;
    let train = features(&a.train, a.features, nominal.as_ref())?;
    let test = features(&a.test, a.features, nominal.as_ref())?;
    let model = train_classifier(&spec, &train, SplitSpec { k: a.folds }, a.seed)?;
    let pred = predict_classes(&model, &test.features, &test.recordings)?;
    let cm = confusion_matrix(&test.labels, &pred)?;

    let mut w = BufWriter::new(File::create(&a.output)?);
    thruster_fdd::fdd::report::write_confusion_csv(&cm.normalized, &mut w)?;
    w.flush()?;
    if let Some(m) = &a.model_out {
        model.save(m)?;
    }
    println!("{} (batch {}): cv accuracy {}", spec.name(), spec.batch_size, model.cv_score());
    println!("test accuracy {}", cm.accuracy());
    for c in FaultCondition::ALL {
        if cm.support(c) > 0 {
            println!("  recall {:<16}{:.4}", c.name(), cm.recall(c));
        }
    }
    println!("wrote {}", a.output.display());
    Ok(())
}

pub fn benchmark(a: BenchmarkArgs) -> Outcome {
    let mut overrides = a.overrides.clone();
    if let Some(s) = a.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = config_from(a.config.as_deref(), &overrides)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    log::info!("benchmark seed {} into {}", cfg.seed, a.out.display());
    let run = thruster_fdd::run_benchmark(&cfg)?;
    run.write(&a.out)?;

    let report = &run.report;
    println!("nominal model: {}", report.nominal_model);
    let freqs: Vec<String> = report.frequencies_hz.iter().map(|f| format!("{f} Hz")).collect();
    println!("r2 (parallel) at {}", freqs.join(", "));
    for r in &report.regressors {
        let row: Vec<String> = r.parallel.iter().map(|x| format!("{x:.4}")).collect();
        println!("  {:<10}{}", r.method, row.join("  "));
    }
    for c in &report.classifiers {
        println!("  {:<10}batch {:<3}test accuracy {:.4}", c.name, c.batch_size, c.test_accuracy);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
