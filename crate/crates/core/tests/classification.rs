use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thruster_fdd::fdd::confusion_matrix;
use thruster_fdd::models::{predict_classes, predict_proba, train_classifier, ClassifierData, ClassifierSpec, TrainedModel};
use thruster_fdd::preprocess::SplitSpec;
use thruster_fdd::rng::rng_from_seed;
use thruster_fdd::*;

const SPLIT: SplitSpec = SplitSpec { k: 3 };

fn spec(preset: &str, epochs: usize) -> ClassifierSpec {
    let mut s = ClassifierSpec::preset(preset).unwrap();
    s.train.epochs = epochs;
    s.train.patience = epochs;
    s
}

/// Six tight clusters on a circle, one recording per class.
fn clusters(per_class: usize, seed: u64) -> ClassifierData {
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let (mut features, mut labels, mut recordings) = (vec![], vec![], vec![]);
    for c in FaultCondition::ALL {
        let a = c.index() as f64 * std::f64::consts::TAU / 6.0;
        let start = features.len();
        for _ in 0..per_class {
            features.push(vec![3.0 * a.cos() + noise.sample(&mut rng), 3.0 * a.sin() + noise.sample(&mut rng)]);
            labels.push(c);
        }
        recordings.push(start..features.len());
    }
    ClassifierData {
        features,
        labels,
        recordings,
    }
}

fn accuracy(model: &TrainedModel, data: &ClassifierData) -> f64 {
    let pred = predict_classes(model, &data.features, &data.recordings).unwrap();
    confusion_matrix(&data.labels, &pred).unwrap().accuracy()
}

#[test]
fn separable_six_class_toy_is_solved() {
    let train = clusters(60, 1);
    let test = clusters(40, 2);
    for preset in ["clf-mlp-res", "clf-lstm-res"] {
        let m = train_classifier(&spec(preset, 40), &train, SPLIT, 3).unwrap();
        assert_eq!(accuracy(&m, &test), 1.0, "{preset}");
    }
}

#[test]
fn probabilities_form_a_simplex() {
    let train = clusters(30, 1);
    let m = train_classifier(&spec("clf-lstm-res", 3), &train, SPLIT, 3).unwrap();
    for p in predict_proba(&m, &train.features, &train.recordings).unwrap() {
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
    }
}

fn raw_features(per_class: usize, seed: u64) -> ClassifierData {
    let params = PlantParams::default();
    let (mut features, mut labels, mut recordings) = (vec![], vec![], vec![]);
    for c in FaultCondition::ALL {
        let f = simulate(&InputSignal::sine(0.01, per_class as f64 / 10.0), c, &params, seed + c.index() as u64).unwrap();
        let start = features.len();
        for t in 0..f.len() {
            features.push(vec![f.u[t], f.v[t], f.rpm[t], f.i[t]]);
            labels.push(c);
        }
        recordings.push(start..features.len());
    }
    ClassifierData {
        features,
        labels,
        recordings,
    }
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let mut train = raw_features(400, 10);
    train.labels.shuffle(&mut rng_from_seed(4));
    let test = raw_features(400, 50);
    let m = train_classifier(&spec("clf-mlp-all", 8), &train, SPLIT, 5).unwrap();
    let acc = accuracy(&m, &test);
    assert!((acc - 1.0 / 6.0).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn fold_training_ignores_later_rows() {
    let data = raw_features(200, 10);
    let s = spec("clf-mlp-all", 4);
    let a = train_classifier(&s, &data, SPLIT, 5).unwrap();
    let fold0 = &a.cv[0];
    for (tr, va) in fold0.train_rows.iter().zip(&fold0.validation_rows) {
        assert!(tr.end <= va.start);
    }
    let mut b_data = data.clone();
    let mut rng = rng_from_seed(1);
    for (tr, rec) in fold0.train_rows.iter().zip(&data.recordings) {
        for row in tr.end..rec.end {
            b_data.features[row] = (0..4).map(|_| rng.random_range(-1e3..1e3)).collect();
        }
    }
    let b = train_classifier(&s, &b_data, SPLIT, 5).unwrap();
    let losses = |m: &TrainedModel| m.cv[0].history.iter().map(|e| e.train_loss).collect::<Vec<_>>();
    assert_eq!(losses(&a), losses(&b));
}

#[test]
fn missing_class_is_a_data_error() {
    let mut data = clusters(20, 1);
    let keep = data.recordings[4].end;
    data.features.truncate(keep);
    data.labels.truncate(keep);
    data.recordings.pop();
    let err = train_classifier(&spec("clf-mlp-res", 2), &data, SPLIT, 1).unwrap_err();
    assert!(matches!(err, FddError::Data(_)), "{err}");

    // Every class present overall, but one only late in its recording.
    let mut data = clusters(20, 1);
    let rec = data.recordings[0].clone();
    data.labels[rec.start..rec.start + 10].fill(FaultCondition::Voltage13V);
    let err = train_classifier(&spec("clf-mlp-res", 2), &data, SPLIT, 1).unwrap_err();
    assert!(err.to_string().contains("fold"), "{err}");
}
