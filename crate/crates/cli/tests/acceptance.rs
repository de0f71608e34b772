//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the process; see the README's "Known deviations" section for why they
//! are not met on the synthetic plant. Any other failure exits non-zero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::Rng;
use thruster_fdd::fdd::{confusion_matrix, r2_score, DiagnosisReport};
use thruster_fdd::models::regressor::predict_parallel_frame;
use thruster_fdd::models::{train_regressor, RegressorKind, RegressorSpec};
use thruster_fdd::nn::{
    check_gradients, gru_step, lstm_step, one_hot, Activation, DenseLayer, GruCell, LossAt, LossKind, LstmCell, Matrix,
    Network, RecurrentLayer, RecurrentState,
};
use thruster_fdd::plant::{respond, simulate_with_table, step_timings};
use thruster_fdd::preprocess::{lag_row, ts_kfold, DelaySpec, ScalerParams, SplitSpec, Tap};
use thruster_fdd::rng::{derive_seed, rng_from_seed, SeededRng};
use thruster_fdd::{BenchmarkConfig, FaultCondition, InputSignal, PlantParams};

/// Criteria that do not hold on the synthetic plant.
const KNOWN_FAILURES: [u32; 2] = [7, 8];

// Tolerances and budgets.
const DEAD_TIME_S: f64 = 0.59;
const SETTLING_S: (f64, f64) = (2.7, 3.2);
const CALIBRATION_BUDGET: Duration = Duration::from_secs(1);
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_SEEDS: u64 = 5;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const FD_STEP: f64 = 1e-5;
const CELL_TOL: f64 = 1e-12;
const CELL_INSTANCES: usize = 100;
const NARX_MIN_R2: f64 = 0.97;
const NARX_BUDGET: Duration = Duration::from_secs(300);
const RESIDUAL_MIN_ACCURACY: f64 = 0.70;
const CLASSIFIER_SEEDS: [u64; 3] = [7, 8, 9];
const CLASSIFIER_BUDGET: Duration = Duration::from_secs(600);
const ROW_SUM_TOL: f64 = 1e-9;
const VOLTAGE_MIN_RECALL: f64 = 0.95;
const SCALER_TOL: f64 = 1e-12;
const FUZZ_CASES: usize = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_thruster-fdd")
}

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.cfg")
}

fn run_benchmark(out: &Path, seed: u64, extra: &[&str]) -> (DiagnosisReport, Duration) {
    let start = Instant::now();
    let status = Command::new(bin())
        .arg("benchmark")
        .arg("--config")
        .arg(default_config())
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--out")
        .arg(out)
        .args(extra)
        .stdout(Stdio::null())
        .status()
        .expect("launch thruster-fdd");
    let elapsed = start.elapsed();
    assert!(status.success(), "benchmark --seed {seed} exited with {status}");
    let text = std::fs::read_to_string(out.join("report.json")).expect("report.json");
    (DiagnosisReport::from_json(&text).expect("parse report"), elapsed)
}

// 1

fn calibration() -> Outcome {
    let start = Instant::now();
    let p = PlantParams::default().noiseless();
    let f = thruster_fdd::simulate(&InputSignal::staircase(0.25, 160.0), FaultCondition::Nominal15V, &p, 0).unwrap();
    let mut timings = step_timings(&f.t, &f.u, &f.rpm, 0.02);
    timings.extend(step_timings(&f.t, &f.u, &f.i, 0.02));
    let elapsed = start.elapsed();
    let sample = 1.0 / p.sample_rate_hz;
    let dead_ok = timings.iter().all(|s| (s.dead_time_s - DEAD_TIME_S).abs() <= sample + 1e-9);
    let settle_ok = timings
        .iter()
        .all(|s| (SETTLING_S.0..=SETTLING_S.1).contains(&s.settling_time_s));
    let n = timings.len() as f64;
    let dead = timings.iter().map(|s| s.dead_time_s).sum::<f64>() / n;
    let settle = timings.iter().map(|s| s.settling_time_s).sum::<f64>() / n;
    outcome(
        timings.len() >= 28 && dead_ok && settle_ok && elapsed < CALIBRATION_BUDGET,
        format!(
            "{} steps (rpm and current), mean dead time {dead:.3} s, mean 2% settling {settle:.3} s, {:.0} ms",
            timings.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

// 2

fn deadband() -> Outcome {
    let p = PlantParams::default().noiseless();
    let table = thruster_fdd::FaultTable::default();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for c in FaultCondition::ALL {
        for k in 0..=20 {
            let u0 = -p.deadband_u + 2.0 * p.deadband_u * k as f64 / 20.0;
            let (_, rpm, i) = respond(&vec![u0; 200], &table.get(c), &p, 0);
            let (rpm_ss, i_ss) = thruster_fdd::steady_state_maps(u0, &table.get(c), &p).unwrap();
            worst = rpm.iter().chain(&i).chain([&rpm_ss, &i_ss]).fold(worst, |m, x| m.max(x.abs()));
            cases += 1;
        }
    }
    outcome(worst == 0.0, format!("{cases} constant inputs in [-0.05, 0.05], max |output| {worst:e}"))
}

// 3

fn rand_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn stack(rng: &mut SeededRng, cell: Option<&str>, out_act: Activation, outputs: usize) -> Network {
    let (recurrent, feat) = match cell {
        Some("lstm") => (Some(RecurrentLayer::Lstm(LstmCell::init(3, 4, Activation::Logistic, rng))), 4),
        Some("gru") => (Some(RecurrentLayer::Gru(GruCell::init(3, 4, Activation::Logistic, rng))), 4),
        _ => (None, 3),
    };
    let mut net = Network::new(
        recurrent,
        vec![
            DenseLayer::init(feat, 5, Activation::Tanh, rng),
            DenseLayer::init(5, outputs, out_act, rng),
        ],
    )
    .unwrap();
    for block in net.param_slices_mut() {
        for x in block.iter_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    net
}

fn worst_gradient_error(cell: Option<&str>, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let steps = if cell.is_some() { 6 } else { 1 };
    let inputs: Vec<Vec<f64>> = (0..steps).map(|_| rand_vec(&mut rng, 3, 1.5)).collect();
    let reg = stack(&mut rng, cell, Activation::Linear, 2);
    let targets: Vec<Vec<f64>> = (0..steps).map(|_| rand_vec(&mut rng, 2, 1.5)).collect();
    let init = RecurrentState {
        h: rand_vec(&mut rng, reg.hidden_size(), 0.5),
        c: rand_vec(&mut rng, reg.hidden_size(), 0.5),
    };
    let mse = check_gradients(&reg, &inputs, &targets, LossKind::MeanSquaredError, LossAt::EveryStep, &init, FD_STEP).unwrap();
    let clf = stack(&mut rng, cell, Activation::Softmax, 6);
    let labels: Vec<Vec<f64>> = (0..steps).map(|_| one_hot(rng.random_range(0..6), 6)).collect();
    let at = if cell.is_some() { LossAt::LastStep } else { LossAt::EveryStep };
    let ce = check_gradients(&clf, &inputs, &labels, LossKind::CrossEntropy, at, &init, FD_STEP).unwrap();
    mse.max_rel_error.max(ce.max_rel_error)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for (name, cell) in [("dense", None), ("lstm", Some("lstm")), ("gru", Some("gru"))] {
        let e = (0..GRAD_SEEDS).map(|s| worst_gradient_error(cell, 100 + s)).fold(0.0, f64::max);
        worst = worst.max(e);
        parts.push(format!("{name} {e:.1e}"));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < GRAD_REL_TOL && elapsed < GRAD_BUDGET,
        format!("max relative error over {GRAD_SEEDS} seeds: {}; {:.1} s", parts.join(", "), elapsed.as_secs_f64()),
    )
}

// 4

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn affine(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &[f64]) -> Vec<f64> {
    (0..b.len())
        .map(|r| {
            let mut acc = b[r];
            for c in 0..x.len() {
                acc += w.data[r * x.len() + c] * x[c];
            }
            for c in 0..h.len() {
                acc += u.data[r * h.len() + c] * h[c];
            }
            acc
        })
        .collect()
}

fn cells() -> Outcome {
    let mut rng = rng_from_seed(44);
    let mut worst = 0.0f64;
    for _ in 0..CELL_INSTANCES {
        let (nx, nh) = (rng.random_range(1..6), rng.random_range(1..9));
        let x = rand_vec(&mut rng, nx, 2.0);
        let h = rand_vec(&mut rng, nh, 1.0);
        let c = rand_vec(&mut rng, nh, 2.0);

        let mut lstm = LstmCell::init(nx, nh, Activation::Logistic, &mut rng);
        for b in [&mut lstm.b_f, &mut lstm.b_i, &mut lstm.b_o, &mut lstm.b_c] {
            *b = rand_vec(&mut rng, nh, 1.0);
        }
        let s = lstm_step(&lstm, &x, &RecurrentState { h: h.clone(), c: c.clone() }).unwrap();
        let p = &lstm;
        let f: Vec<f64> = affine(&p.w_f, &x, &p.u_f, &h, &p.b_f).into_iter().map(sig).collect();
        let i: Vec<f64> = affine(&p.w_i, &x, &p.u_i, &h, &p.b_i).into_iter().map(sig).collect();
        let o: Vec<f64> = affine(&p.w_o, &x, &p.u_o, &h, &p.b_o).into_iter().map(sig).collect();
        let g: Vec<f64> = affine(&p.w_c, &x, &p.u_c, &h, &p.b_c).into_iter().map(f64::tanh).collect();
        for k in 0..nh {
            let c_new = f[k] * c[k] + i[k] * g[k];
            worst = worst.max((s.c[k] - c_new).abs()).max((s.h[k] - o[k] * c_new.tanh()).abs());
        }

        let mut gru = GruCell::init(nx, nh, Activation::Logistic, &mut rng);
        for b in [&mut gru.b_z, &mut gru.b_r, &mut gru.b_h] {
            *b = rand_vec(&mut rng, nh, 1.0);
        }
        let s = gru_step(&gru, &x, &RecurrentState { h: h.clone(), c: vec![0.0; nh] }).unwrap();
        let p = &gru;
        let z: Vec<f64> = affine(&p.w_z, &x, &p.u_z, &h, &p.b_z).into_iter().map(sig).collect();
        let r: Vec<f64> = affine(&p.w_r, &x, &p.u_r, &h, &p.b_r).into_iter().map(sig).collect();
        let rh: Vec<f64> = (0..nh).map(|k| r[k] * h[k]).collect();
        let n: Vec<f64> = affine(&p.w_h, &x, &p.u_h, &rh, &p.b_h).into_iter().map(f64::tanh).collect();
        for k in 0..nh {
            worst = worst.max((s.h[k] - ((1.0 - z[k]) * h[k] + z[k] * n[k])).abs());
        }
    }
    outcome(worst <= CELL_TOL, format!("{CELL_INSTANCES} random LSTM and GRU instances, max deviation {worst:e}"))
}

// 5

struct NarxCheck {
    row: Vec<f64>,
    elapsed: Duration,
}

/// Retrains the benchmark's NARX row directly through the library.
fn narx_row(cfg: &BenchmarkConfig) -> NarxCheck {
    let start = Instant::now();
    let sim = |name: &str, freq: f64, samples: usize| {
        let seed = derive_seed(cfg.seed, &format!("sim/{name}"));
        let secs = samples as f64 / cfg.plant.sample_rate_hz;
        simulate_with_table(&InputSignal::sine(freq, secs), FaultCondition::Nominal15V, &cfg.faults, &cfg.plant, seed).unwrap()
    };
    let train = sim("nominal-train", cfg.train_freq_hz, cfg.train_samples);
    let mut spec = RegressorSpec::preset_for(RegressorKind::Narx, &cfg.plant);
    spec.train.epochs = cfg.regressor_epochs;
    spec.train.patience = cfg.regressor_patience;
    spec.train.learning_rate = cfg.learning_rate;
    let model = train_regressor(&spec, &train, SplitSpec { k: cfg.regressor_folds }, derive_seed(cfg.seed, "regressor/narx")).unwrap();
    let warm = cfg
        .regressors
        .iter()
        .map(|p| RegressorSpec::preset_for(p.parse().unwrap(), &cfg.plant).warmup())
        .max()
        .unwrap();
    let row = cfg
        .test_freqs_hz
        .iter()
        .map(|&f| {
            let test = sim(&format!("test-{f}Hz"), f, warm + cfg.test_samples);
            let p = predict_parallel_frame(&model, &test).unwrap().window(warm..warm + cfg.test_samples).unwrap();
            let rows = warm..warm + cfg.test_samples;
            (r2_score(&test.rpm[rows.clone()], &p.rpm).unwrap() + r2_score(&test.i[rows], &p.i).unwrap()) / 2.0
        })
        .collect();
    NarxCheck {
        row,
        elapsed: start.elapsed(),
    }
}

fn non_increasing_from_max(row: &[f64]) -> bool {
    let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    row[peak..].windows(2).all(|w| w[1] <= w[0])
}

fn nominal_quality(check: &NarxCheck, report: &DiagnosisReport) -> Outcome {
    let reported = &report.regressor("narx").expect("narx row").parallel;
    let same = reported == &check.row;
    let row: Vec<String> = check.row.iter().map(|x| format!("{x:.6}")).collect();
    outcome(
        check.row[0] >= NARX_MIN_R2 && non_increasing_from_max(&check.row) && same && check.elapsed < NARX_BUDGET,
        format!(
            "NARX r² at {:?} Hz: [{}]; matches report: {same}; {:.0} s",
            report.frequencies_hz,
            row.join(", "),
            check.elapsed.as_secs_f64()
        ),
    )
}

// 6

fn regressor_ordering(report: &DiagnosisReport) -> Outcome {
    let at = report.frequencies_hz.iter().position(|&f| f == 0.02).expect("0.02 Hz column");
    let narx = report.regressor("narx").unwrap().parallel[at];
    let mlp = report.regressor("mlp").unwrap().parallel[at];
    outcome(narx >= mlp, format!("r² at 0.02 Hz: NARX {narx:.4}, MLP {mlp:.4}"))
}

// 7

fn residual_advantage(reports: &[&DiagnosisReport], elapsed: Duration) -> Outcome {
    let mut parts = Vec::new();
    let mut all_ok = true;
    for r in reports {
        let res = r.classifier("clf-mlp-res", 1).unwrap().test_accuracy;
        let raw = r.classifier("clf-mlp-all", 1).unwrap().test_accuracy;
        all_ok &= res >= raw;
        parts.push(format!("seed {}: res {res:.4} vs all {raw:.4}", r.seed));
    }
    let headline = reports[0].headline().expect("headline classifier");
    let abs_ok = headline.name == "MLP_res" && headline.test_accuracy >= RESIDUAL_MIN_ACCURACY;
    outcome(
        all_ok && abs_ok && elapsed < CLASSIFIER_BUDGET,
        format!(
            "{}; residual MLP accuracy {:.4}; {:.0} s",
            parts.join("; "),
            headline.test_accuracy,
            elapsed.as_secs_f64()
        ),
    )
}

// 8

fn confusion_invariants(report: &DiagnosisReport) -> Outcome {
    let labels: Vec<FaultCondition> = (0..600).map(|k| FaultCondition::ALL[k % 6]).collect();
    let ident = confusion_matrix(&labels, &labels).unwrap();
    let identity_ok = (0..6).all(|r| (0..6).all(|c| ident.normalized[r][c] == if r == c { 1.0 } else { 0.0 }));
    let sums_ok = report.classifiers.iter().all(|c| {
        c.confusion
            .normalized
            .iter()
            .all(|row| (row.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOL)
    });
    let h = report.headline().expect("headline classifier");
    let r13 = h.confusion.recall(FaultCondition::Voltage13V);
    let r118 = h.confusion.recall(FaultCondition::Voltage11_8V);
    outcome(
        identity_ok && sums_ok && r13 >= VOLTAGE_MIN_RECALL && r118 >= VOLTAGE_MIN_RECALL,
        format!(
            "identity {identity_ok}, row sums {sums_ok}; {} batch {} recall 13.0 V {r13:.4}, 11.8 V {r118:.4}",
            h.name, h.batch_size
        ),
    )
}

// 9

fn preprocessing() -> Outcome {
    let mut rng = rng_from_seed(99);
    let mut round_trip = 0.0f64;
    let mut split_ok = true;
    let mut causal_ok = true;
    for _ in 0..FUZZ_CASES {
        let n = rng.random_range(4..200);
        let scale = 10f64.powf(rng.random_range(-3.0..4.0));
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let sc = ScalerParams::fit(&[&xs]).unwrap();
        for (x, back) in xs.iter().zip(sc.inverse_column(0, &sc.transform_column(0, &xs))) {
            round_trip = round_trip.max((x - back).abs() / x.abs().max(1.0));
        }

        let k = rng.random_range(2..12);
        let m = rng.random_range(k + 2..k + 3000);
        for f in ts_kfold(m, SplitSpec { k }).unwrap() {
            split_ok &= f.train.end <= f.validation.start && !f.train.is_empty() && !f.validation.is_empty();
        }

        let spec = DelaySpec {
            input: Tap::new(rng.random_range(1..6), rng.random_range(0..3)),
            output: Tap::new(rng.random_range(0..4), rng.random_range(0..3)),
        };
        let with_outputs = rng.random_bool(0.5);
        let len = 30;
        let sigs: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, len, 5.0)).collect();
        let first = spec.max_delay(with_outputs);
        let t = rng.random_range(first..len);
        let row_at = |s: &[Vec<f64>]| {
            let i: Vec<&[f64]> = s[..2].iter().map(Vec::as_slice).collect();
            let o: Vec<&[f64]> = s[2..].iter().map(Vec::as_slice).collect();
            lag_row(&i, &o, &spec, with_outputs, t)
        };
        let before = row_at(&sigs);
        let mut mutated = sigs.clone();
        mutated[rng.random_range(0..4)][rng.random_range(t..len)] += rng.random_range(1.0..50.0);
        causal_ok &= before == row_at(&mutated);
    }
    let constant = ScalerParams::fit(&[&[3.5; 20]]).unwrap();
    let fallback_ok = constant.iqr[0] == 1.0 && constant.fallback[0] && constant.transform_one(0, 3.5) == 0.0;
    outcome(
        round_trip <= SCALER_TOL && split_ok && causal_ok && fallback_ok,
        format!(
            "{FUZZ_CASES} cases: scaler round trip {round_trip:e}, constant fallback {fallback_ok}, split order {split_ok}, causality {causal_ok}"
        ),
    )
}

// 10

fn list_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let (fa, fb) = (list_files(a), list_files(b));
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let bytes: usize = fa.values().map(Vec::len).sum();
    outcome(
        differing.is_empty() && !fa.is_empty(),
        if differing.is_empty() {
            format!("{} files, {bytes} bytes, identical", fa.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

// 11

fn r2_examples() -> Outcome {
    let y = [1.0, 2.0, 3.0];
    let a = r2_score(&y, &y).unwrap();
    let b = r2_score(&y, &[2.0, 2.0, 2.0]).unwrap();
    let c = r2_score(&y, &[1.0, 2.0, 2.0]).unwrap();
    outcome(a == 1.0 && b == 0.0 && c == 0.5, format!("perfect {a}, mean {b}, [1,2,2] {c}"))
}

fn main() {
    // `cargo test -- --list` and filters from other targets pass arguments;
    // this target only runs as a whole.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results: BTreeMap<u32, Outcome> = BTreeMap::new();
    let mut record = |n: u32, o: Outcome| {
        eprintln!("[{n}] {}", if o.pass { "pass" } else { "FAIL" });
        results.insert(n, o);
    };

    record(1, calibration());
    record(2, deadband());
    record(3, gradients());
    record(4, cells());
    record(9, preprocessing());
    record(11, r2_examples());

    let scratch = tempfile::tempdir().expect("temp dir");
    let first = scratch.path().join("seed7-a");
    let second = scratch.path().join("seed7-b");
    eprintln!("running the default benchmark (seed 7)");
    let (report, t7) = run_benchmark(&first, 7, &[]);

    let cfg = BenchmarkConfig::load(default_config()).expect("default config");
    record(5, nominal_quality(&narx_row(&cfg), &report));
    record(6, regressor_ordering(&report));

    let reduced = ["--set", "regressors=narx", "--set", "classifiers=clf-mlp-all:1,clf-mlp-res:1"];
    let mut extra = Vec::new();
    let mut t_class = t7;
    for &seed in &CLASSIFIER_SEEDS[1..] {
        eprintln!("running the reduced benchmark (seed {seed})");
        let (r, t) = run_benchmark(&scratch.path().join(format!("seed{seed}")), seed, &reduced);
        t_class += t;
        extra.push(r);
    }
    let all: Vec<&DiagnosisReport> = std::iter::once(&report).chain(&extra).collect();
    record(7, residual_advantage(&all, t_class));
    record(8, confusion_invariants(&report));

    eprintln!("repeating the default benchmark (seed 7)");
    run_benchmark(&second, 7, &[]);
    record(10, determinism(&first, &second));

    let mut unexpected = Vec::new();
    println!();
    for (n, o) in &results {
        let known = KNOWN_FAILURES.contains(n);
        let tag = match (o.pass, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as a known failure)",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {n:>2}: {tag}: {}", o.detail);
        if !o.pass && !known {
            unexpected.push(*n);
        }
    }
    let passed = results.values().filter(|o| o.pass).count();
    println!("\n{passed}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
