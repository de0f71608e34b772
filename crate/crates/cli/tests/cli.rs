use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thruster_fdd::fdd::r2_score;
use thruster_fdd::models::regressor::predict_parallel_frame;
use thruster_fdd::models::TrainedModel;
use thruster_fdd::{BenchmarkConfig, DiagnosisReport, TimeSeriesFrame};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thruster-fdd")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, condition: &str, freq: &str, duration: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    let out = run(&[
        "simulate", "--signal", "sine", "--freq", freq, "--duration", duration, "--condition", condition, "--seed", seed,
        "-o", p(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

const SMALL_BENCHMARK: [&str; 20] = [
    "--set", "train_samples=400",
    "--set", "test_samples=150",
    "--set", "class_train_samples=150",
    "--set", "class_test_samples=120",
    "--set", "regressors=narx,mlp",
    "--set", "regressor_epochs=3",
    "--set", "classifier_epochs=2",
    "--set", "classifiers=clf-mlp-all:5,clf-mlp-res:5",
    "--set", "test_freqs_hz=0.01,0.04",
    "--set", "classifier_folds=2",
];

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["simulate", "--signal", "sine", "--duration", "10", "--condition", "nominal", "--seed", "1", "-o", "x.csv"])), 2);
    assert_eq!(code(&run(&["simulate", "--signal", "square", "--freq", "0.1", "--duration", "10", "--condition", "nominal", "--seed", "1", "-o", "x.csv"])), 2);
    assert_eq!(code(&run(&["train", "--preset", "transformer", "--data", "x.csv", "--seed", "1", "-o", "m.json"])), 2);
    assert_eq!(code(&run(&["benchmark", "--set", "no_such_key=1"])), 2);
    assert_eq!(code(&run(&["benchmark", "--set", "missing-equals"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&run(&["train", "--preset", "narx", "--data", p(&missing), "--seed", "1", "-o", "m.json"])), 1);

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "a,b\n1,2\n").unwrap();
    let out = run(&["train", "--preset", "narx", "--data", p(&junk), "--seed", "1", "-o", p(&dir.path().join("m.json"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));

    // A dataset where a model file is expected.
    let data = simulate(dir.path(), "d.csv", "nominal", "0.02", "30", "1");
    let out = run(&["eval", "--model", p(&data), "--data", p(&data)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_is_repeatable_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", "nominal15v", "0.01", "200", "7");
    let b = simulate(dir.path(), "b.csv", "nominal15v", "0.01", "200", "7");
    let c = simulate(dir.path(), "c.csv", "nominal15v", "0.01", "200", "8");
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    let frame = TimeSeriesFrame::read_csv(a.as_slice()).unwrap();
    assert_eq!(frame.len(), 2000);
    assert!((frame.t[1] - frame.t[0] - 0.1).abs() < 1e-12);

    let stairs = dir.path().join("s.csv");
    let out = run(&[
        "simulate", "--signal", "staircase", "--step", "0.25", "--duration", "160", "--condition", "biofouling", "--seed", "3",
        "-o", p(&stairs),
    ]);
    assert_eq!(code(&out), 0);
    let f = TimeSeriesFrame::load_csv(&stairs).unwrap();
    let mut levels: Vec<f64> = f.u.clone();
    levels.dedup();
    assert!(levels.windows(2).all(|w| ((w[1] - w[0]).abs() - 0.25).abs() < 1e-12));
}

#[test]
fn train_then_eval_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let train = simulate(dir.path(), "train.csv", "nominal", "0.01", "60", "1");
    let test = simulate(dir.path(), "test.csv", "nominal", "0.02", "40", "2");
    let model = dir.path().join("narx.json");
    let out = run(&["train", "--preset", "narx", "--data", p(&train), "--seed", "7", "--epochs", "5", "-o", p(&model)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("narx.history.csv")).unwrap();
    assert!(history.starts_with("phase,epoch,train_loss,val_loss\n"));
    assert!(history.contains("\nfinal,"));

    let out = run(&["eval", "--model", p(&model), "--data", p(&test)]);
    assert_eq!(code(&out), 0);
    let printed: Vec<(String, String)> = stdout(&out)
        .lines()
        .filter_map(|l| l.split_once(' ').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str| printed.iter().find(|(key, _)| key == k).unwrap().1.parse::<f64>().unwrap();

    let m = TrainedModel::load(&model).unwrap();
    let f = TimeSeriesFrame::load_csv(&test).unwrap();
    let pred = predict_parallel_frame(&m, &f).unwrap();
    let rows = pred.first_row..f.len();
    assert_eq!(get("r2_rpm"), r2_score(&f.rpm[rows.clone()], &pred.rpm).unwrap());
    assert_eq!(get("r2_i"), r2_score(&f.i[rows], &pred.i).unwrap());
    assert_eq!(get("r2_mean"), pred.mean_r2(&f).unwrap());

    // Same inputs, same seed: the same model file.
    let again = dir.path().join("again.json");
    run(&["train", "--preset", "narx", "--data", p(&train), "--seed", "7", "--epochs", "5", "-o", p(&again)]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn residuals_and_classify_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let train = simulate(dir.path(), "nominal.csv", "nominal", "0.01", "60", "1");
    let model = dir.path().join("narx.json");
    run(&["train", "--preset", "narx", "--data", p(&train), "--seed", "7", "--epochs", "5", "-o", p(&model)]);

    let conditions = ["nominal15v", "voltage13v", "voltage11_8v", "onebrokenblade", "twobrokenblades", "biofouling"];
    let mut args: Vec<String> = vec!["classify".into(), "--nominal".into(), p(&model).into()];
    for (k, c) in conditions.iter().enumerate() {
        let tr = simulate(dir.path(), &format!("tr_{c}.csv"), c, "0.01", "30", &(10 + k).to_string());
        let te = simulate(dir.path(), &format!("te_{c}.csv"), c, "0.01", "20", &(20 + k).to_string());
        args.extend(["--train".into(), p(&tr).into(), "--test".into(), p(&te).into()]);
    }

    let res = dir.path().join("res.csv");
    let out = run(&["residuals", "--model", p(&model), "--data", p(&dir.path().join("te_biofouling.csv")), "-o", p(&res)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_to_string(&res).unwrap().lines().count(), 200 - 20 + 1);

    for features in ["all", "residuals"] {
        let cm = dir.path().join(format!("cm_{features}.csv"));
        let mut a = args.clone();
        a.extend(["--features", features, "--seed", "3", "--epochs", "2", "-o", p(&cm)].map(String::from));
        let out = Command::new(env!("CARGO_BIN_EXE_thruster-fdd")).args(&a).output().unwrap();
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains("test accuracy"));
        let text = std::fs::read_to_string(&cm).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 7);
        for row in &rows[1..] {
            let sum: f64 = row.split(',').skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn shipped_config_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.cfg");
    assert_eq!(BenchmarkConfig::load(path).unwrap(), BenchmarkConfig::default());
}

#[test]
fn small_benchmark_writes_a_complete_and_repeatable_report() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let mut args = vec!["benchmark", "--seed", "11", "--out", p(out_dir)];
        args.extend(SMALL_BENCHMARK);
        let out = run(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in [
        "report.json",
        "r2_scores.csv",
        "accuracy.csv",
        "confusion.csv",
        "config.cfg",
        "plots/scatter_class_train_Biofouling.csv",
        "plots/residuals_Nominal15V.csv",
        "plots/prediction_test_0.04Hz.csv",
    ] {
        let (x, y) = (std::fs::read(a.join(file)), std::fs::read(b.join(file)));
        assert!(x.is_ok(), "missing {file}");
        assert_eq!(x.unwrap(), y.unwrap(), "{file} differs between runs");
    }
    let report = DiagnosisReport::from_json(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 11);
    assert_eq!(report.regressors.len(), 2);
    assert_eq!(std::fs::read_to_string(a.join("r2_scores.csv")).unwrap().lines().count(), 1 + 2 * 2);

    // The echoed config reproduces the run on its own.
    let c = dir.path().join("c");
    let out = run(&["benchmark", "--config", p(&a.join("config.cfg")), "--out", p(&c)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(c.join("report.json")).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let mut args = vec!["benchmark", "--seed", "5", "--out", p(&out_dir)];
        args.extend(SMALL_BENCHMARK);
        let out = Command::new(env!("CARGO_BIN_EXE_thruster-fdd"))
            .env("THRUSTER_FDD_THREADS", threads)
            .args(&args)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
