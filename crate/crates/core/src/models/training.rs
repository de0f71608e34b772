//! Mini-batch ADAM training with early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{FddError, Result};
use crate::nn::{adam_update, backward_into, loss, AdamConfig, LossAt, LossKind, Network, OptimizerState};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Upper bound on epochs.
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            patience: 20,
            learning_rate: 1e-3,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(FddError::Config("epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(FddError::Config("patience must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FddError::Config(format!("learning rate {} is not positive", self.learning_rate)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(FddError::Config(format!("clip norm {c} is not positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    /// Independent sequences (one step for feed-forward rows), reshuffled
    /// every epoch, each starting from the zero state.
    Independent { examples: Vec<Example>, at: LossAt },
    /// One long sequence cut into consecutive windows of `window` steps.
    /// The state is carried from window to window but gradients stop at
    /// window boundaries. Steps before `loss_from` only warm the state.
    Stateful {
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        window: usize,
        loss_from: usize,
    },
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Independent { examples, .. } => examples.len(),
            Dataset::Stateful { inputs, loss_from, .. } => inputs.len().saturating_sub(*loss_from),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
}

fn training_error(epoch: usize, err: FddError) -> FddError {
    match err {
        FddError::Numeric { context, step } => FddError::Training {
            epoch,
            message: format!("non-finite {context} at step {step}"),
        },
        other => other,
    }
}

fn apply_batch(net: &mut Network, grads: &mut Network, count: usize, cfg: &TrainConfig, opt: &mut OptimizerState) -> Result<()> {
    grads.scale(1.0 / count as f64);
    if let Some(limit) = cfg.clip_norm {
        let norm = grads.l2_norm();
        if norm > limit {
            grads.scale(limit / norm);
        }
    }
    adam_update(net, grads, opt)
}

fn train_epoch(
    net: &mut Network,
    data: &Dataset,
    kind: LossKind,
    batch: usize,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    grads: &mut Network,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut total = 0.0;
    let mut units = 0usize;
    match data {
        Dataset::Independent { examples, at } => {
            let mut order: Vec<usize> = (0..examples.len()).collect();
            order.shuffle(rng);
            let zero = net.initial_state();
            for chunk in order.chunks(batch) {
                grads.fill_zero();
                for &idx in chunk {
                    let ex = &examples[idx];
                    let (l, _, _) = backward_into(net, &ex.inputs, &ex.targets, kind, *at, &zero, grads)?;
                    total += l;
                }
                units += chunk.len();
                apply_batch(net, grads, chunk.len(), cfg, opt)?;
            }
        }
        Dataset::Stateful {
            inputs,
            targets,
            window,
            loss_from,
        } => {
            let mut state = net.initial_state();
            // Warm-up steps advance the state without contributing loss.
            for x in &inputs[..*loss_from] {
                state = net.step(x, &state)?.1;
            }
            let starts: Vec<usize> = (*loss_from..inputs.len()).step_by(*window).collect();
            for chunk in starts.chunks(batch) {
                grads.fill_zero();
                for &s in chunk {
                    let e = (s + window).min(inputs.len());
                    let (l, _, next) =
                        backward_into(net, &inputs[s..e], &targets[s..e], kind, LossAt::EveryStep, &state, grads)?;
                    total += l;
                    state = next;
                }
                units += chunk.len();
                apply_batch(net, grads, chunk.len(), cfg, opt)?;
            }
        }
    }
    if !net.is_finite() {
        return Err(FddError::Numeric {
            context: "parameters".into(),
            step: opt.step as usize,
        });
    }
    Ok(total / units as f64)
}

/// Mean loss of `net` over `data` without updating anything.
pub fn evaluate(net: &Network, data: &Dataset, kind: LossKind) -> Result<f64> {
    match data {
        Dataset::Independent { examples, at } => {
            let zero = net.initial_state();
            let mut total = 0.0;
            for ex in examples {
                total += crate::nn::sequence_loss(net, &ex.inputs, &ex.targets, kind, *at, &zero)?;
            }
            Ok(total / examples.len() as f64)
        }
        Dataset::Stateful {
            inputs,
            targets,
            loss_from,
            ..
        } => {
            let (preds, _) = net.predict_sequence(inputs, &net.initial_state())?;
            Ok(loss(kind, &preds[*loss_from..], &targets[*loss_from..])?.value)
        }
    }
}

/// Trains `net` in place.
///
/// With validation data, training stops after `patience` epochs without a
/// new best validation loss and the best weights are restored. Without it,
/// exactly `cfg.epochs` epochs run.
pub fn fit(
    net: &mut Network,
    train: &Dataset,
    val: Option<&Dataset>,
    kind: LossKind,
    batch: usize,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<FitResult> {
    cfg.validate()?;
    if batch == 0 {
        return Err(FddError::Config("batch size must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(FddError::Data("no training samples".into()));
    }
    if let Dataset::Stateful { window: 0, .. } = train {
        return Err(FddError::Config("window must be at least 1".into()));
    }
    if val.is_some_and(Dataset::is_empty) {
        return Err(FddError::Data("no validation samples".into()));
    }
    let mut opt = OptimizerState::new(
        net,
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut grads = net.zeros_like();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    for epoch in 1..=cfg.epochs {
        let train_loss = train_epoch(net, train, kind, batch, cfg, &mut opt, &mut grads, rng)
            .map_err(|e| training_error(epoch, e))?;
        let val_loss = match val {
            Some(v) => {
                let l = evaluate(net, v, kind).map_err(|e| training_error(epoch, e))?;
                if !l.is_finite() {
                    return Err(FddError::Training {
                        epoch,
                        message: "non-finite validation loss".into(),
                    });
                }
                Some(l)
            }
            None => None,
        };
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if let Some(l) = val_loss {
            match &best {
                Some((b, _, _)) if l >= *b => {}
                _ => best = Some((l, epoch, net.clone())),
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
            if epoch - best_epoch >= cfg.patience {
                break;
            }
        }
    }
    Ok(match best {
        Some((loss, epoch, weights)) => {
            *net = weights;
            FitResult {
                history,
                best_epoch: epoch,
                best_val_loss: Some(loss),
            }
        }
        None => FitResult {
            best_epoch: history.len(),
            history,
            best_val_loss: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{one_hot, Activation, DenseLayer, Matrix};
    use crate::rng::rng_from_seed;

    fn rows(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Dataset {
        Dataset::Independent {
            examples: xs
                .iter()
                .zip(ys)
                .map(|(x, y)| Example {
                    inputs: vec![x.clone()],
                    targets: vec![y.clone()],
                })
                .collect(),
            at: LossAt::EveryStep,
        }
    }

    #[test]
    fn zero_epochs_is_a_config_error() {
        let mut rng = rng_from_seed(0);
        let mut net = Network::new(None, vec![DenseLayer::init(1, 1, Activation::Linear, &mut rng)]).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let data = rows(&[vec![1.0]], &[vec![1.0]]);
        let err = fit(&mut net, &data, None, LossKind::MeanSquaredError, 1, &cfg, &mut rng).unwrap_err();
        assert!(matches!(err, FddError::Config(_)));
    }

    #[test]
    fn separable_two_class_toy_is_learned_exactly() {
        let mut rng = rng_from_seed(3);
        let xs: Vec<Vec<f64>> = (0..40).map(|k| vec![if k % 2 == 0 { -1.0 } else { 1.0 } + 0.01 * k as f64]).collect();
        let ys: Vec<Vec<f64>> = (0..40).map(|k| one_hot(k % 2, 2)).collect();
        let mut net = Network::new(None, vec![DenseLayer::init(1, 2, Activation::Softmax, &mut rng)]).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        fit(&mut net, &rows(&xs, &ys), None, LossKind::CrossEntropy, 1, &cfg, &mut rng).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (p, _) = net.step(x, &net.initial_state()).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let pred = if p[1] > p[0] { 1 } else { 0 };
            assert_eq!(y[pred], 1.0);
        }
    }

    #[test]
    fn early_stopping_restores_best_weights() {
        let mut rng = rng_from_seed(5);
        let xs: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64 / 20.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0]]).collect();
        // Validation targets disagree with the training relation, so the
        // validation loss rises as training converges.
        let vy: Vec<Vec<f64>> = xs.iter().map(|x| vec![-x[0]]).collect();
        let mut net = Network::new(
            None,
            vec![DenseLayer::new(Matrix::zeros(1, 1), vec![0.0], Activation::Linear).unwrap()],
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            patience: 5,
            learning_rate: 0.01,
            clip_norm: None,
        };
        let r = fit(&mut net, &rows(&xs, &ys), Some(&rows(&xs, &vy)), LossKind::MeanSquaredError, 4, &cfg, &mut rng)
            .unwrap();
        assert!(r.history.len() < 200);
        assert_eq!(r.history.len(), r.best_epoch + 5);
        let best = r.history[r.best_epoch - 1].val_loss.unwrap();
        assert_eq!(r.best_val_loss, Some(best));
        assert!((evaluate(&net, &rows(&xs, &vy), LossKind::MeanSquaredError).unwrap() - best).abs() < 1e-15);
        for (k, rec) in r.history.iter().enumerate() {
            assert_eq!(rec.epoch, k + 1);
        }
    }

    #[test]
    fn nan_loss_names_the_epoch() {
        let mut rng = rng_from_seed(2);
        let mut net = Network::new(None, vec![DenseLayer::init(1, 1, Activation::Linear, &mut rng)]).unwrap();
        let data = rows(&[vec![1.0], vec![f64::NAN]], &[vec![1.0], vec![1.0]]);
        let err = fit(&mut net, &data, None, LossKind::MeanSquaredError, 1, &TrainConfig::default(), &mut rng).unwrap_err();
        assert!(matches!(err, FddError::Training { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn clipping_caps_the_gradient_norm() {
        let mut net = Network::new(
            None,
            vec![DenseLayer::new(Matrix::zeros(1, 2), vec![0.0], Activation::Linear).unwrap()],
        )
        .unwrap();
        let mut grads = net.zeros_like();
        grads.dense[0].weights.data = vec![30.0, 40.0];
        let cfg = TrainConfig {
            clip_norm: Some(0.5),
            ..TrainConfig::default()
        };
        let mut opt = OptimizerState::new(&net, AdamConfig::default());
        apply_batch(&mut net, &mut grads, 2, &cfg, &mut opt).unwrap();
        // Batch mean (15, 20) has norm 25; clipped to 0.5 it is (0.3, 0.4),
        // and the first moment holds (1 − β1) times that.
        assert!((opt.m[0][0] - 0.03).abs() < 1e-15);
        assert!((opt.m[0][1] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn stateful_windows_cover_every_step() {
        let mut rng = rng_from_seed(8);
        let xs: Vec<Vec<f64>> = (0..23).map(|k| vec![(k as f64 * 0.3).sin()]).collect();
        let ys = xs.clone();
        let l: crate::models::Layout = "3G,2P".parse().unwrap();
        let mut net = l.build(1, 1, Activation::Linear, Activation::Logistic, &mut rng).unwrap();
        let data = Dataset::Stateful {
            inputs: xs,
            targets: ys,
            window: 5,
            loss_from: 3,
        };
        assert_eq!(data.len(), 20);
        let before = evaluate(&net, &data, LossKind::MeanSquaredError).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let r = fit(&mut net, &data, None, LossKind::MeanSquaredError, 2, &cfg, &mut rng).unwrap();
        assert_eq!(r.best_epoch, 60);
        assert!(evaluate(&net, &data, LossKind::MeanSquaredError).unwrap() < before);
    }
}
