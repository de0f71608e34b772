use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::dense::{DenseCache, DenseLayer};
use super::gru::{GruCache, GruCell};
use super::loss::{step_loss_and_grad, LossKind};
use super::lstm::{LstmCache, LstmCell};
use super::RecurrentState;
use crate::error::{FddError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "lowercase")]
pub enum RecurrentLayer {
    Lstm(LstmCell),
    Gru(GruCell),
}

impl RecurrentLayer {
    pub fn inputs(&self) -> usize {
        match self {
            RecurrentLayer::Lstm(c) => c.inputs(),
            RecurrentLayer::Gru(c) => c.inputs(),
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            RecurrentLayer::Lstm(c) => c.hidden(),
            RecurrentLayer::Gru(c) => c.hidden(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            RecurrentLayer::Lstm(c) => RecurrentLayer::Lstm(c.zeros_like()),
            RecurrentLayer::Gru(c) => RecurrentLayer::Gru(c.zeros_like()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RecurrentLayer::Lstm(c) => c.validate(),
            RecurrentLayer::Gru(c) => c.validate(),
        }
    }
}

/// A stack of an optional recurrent cell followed by dense layers.
///
/// Gradients use the same type: a `Network` whose entries are partial
/// derivatives, so gradient shapes always mirror parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub recurrent: Option<RecurrentLayer>,
    pub dense: Vec<DenseLayer>,
}

/// Which time steps of a sequence contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossAt {
    EveryStep,
    LastStep,
}

/// Output of [`backward`].
#[derive(Debug, Clone)]
pub struct Backprop {
    pub loss: f64,
    /// Number of probabilities clamped at the cross-entropy floor.
    pub clamped: usize,
    pub grads: Network,
    pub final_state: RecurrentState,
}

enum CellCache {
    Lstm(LstmCache),
    Gru(GruCache),
}

struct StepCache {
    cell: Option<CellCache>,
    feature: Vec<f64>,
    dense: Vec<DenseCache>,
}

impl Network {
    pub fn new(recurrent: Option<RecurrentLayer>, dense: Vec<DenseLayer>) -> Result<Self> {
        let net = Network { recurrent, dense };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dense.is_empty() {
            return Err(FddError::Shape("network needs at least one dense layer".into()));
        }
        let mut width = match &self.recurrent {
            Some(r) => {
                r.validate()?;
                r.hidden()
            }
            None => self.dense[0].inputs(),
        };
        for (k, layer) in self.dense.iter().enumerate() {
            layer.validate()?;
            if layer.inputs() != width {
                return Err(FddError::Shape(format!(
                    "dense layer {k} expects {} inputs but receives {width}",
                    layer.inputs()
                )));
            }
            width = layer.outputs();
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        match &self.recurrent {
            Some(r) => r.inputs(),
            None => self.dense[0].inputs(),
        }
    }

    pub fn output_size(&self) -> usize {
        self.dense.last().map_or(0, DenseLayer::outputs)
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent.as_ref().map_or(0, RecurrentLayer::hidden)
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.hidden_size())
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            recurrent: self.recurrent.as_ref().map(RecurrentLayer::zeros_like),
            dense: self.dense.iter().map(DenseLayer::zeros_like).collect(),
        }
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = match &self.recurrent {
            Some(RecurrentLayer::Lstm(c)) => c.param_slices(),
            Some(RecurrentLayer::Gru(c)) => c.param_slices(),
            None => Vec::new(),
        };
        for layer in &self.dense {
            out.push(&layer.weights.data);
            out.push(&layer.bias);
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = match &mut self.recurrent {
            Some(RecurrentLayer::Lstm(c)) => c.param_slices_mut(),
            Some(RecurrentLayer::Gru(c)) => c.param_slices_mut(),
            None => Vec::new(),
        };
        for layer in &mut self.dense {
            out.push(&mut layer.weights.data);
            out.push(&mut layer.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.param_slices_mut() {
            block.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for block in self.param_slices_mut() {
            block.fill(0.0);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, x: &[f64], state: &RecurrentState) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(FddError::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                x.len()
            )));
        }
        let hidden = self.hidden_size();
        if hidden > 0 && (state.h.len() != hidden || state.c.len() != hidden) {
            return Err(FddError::Shape(format!("recurrent state must have size {hidden}")));
        }
        Ok(())
    }

    fn step_cached(&self, x: &[f64], state: &RecurrentState, with_output: bool) -> (RecurrentState, StepCache, Vec<f64>) {
        let (next, cell, feature) = match &self.recurrent {
            Some(RecurrentLayer::Lstm(c)) => {
                let (s, cache) = c.forward_cached(x, state);
                let h = s.h.clone();
                (s, Some(CellCache::Lstm(cache)), h)
            }
            Some(RecurrentLayer::Gru(c)) => {
                let (s, cache) = c.forward_cached(x, state);
                let h = s.h.clone();
                (s, Some(CellCache::Gru(cache)), h)
            }
            None => (state.clone(), None, x.to_vec()),
        };
        let mut dense = Vec::new();
        let mut out = Vec::new();
        if with_output {
            let mut cur = feature.clone();
            for layer in &self.dense {
                let c = layer.forward_cached(&cur);
                cur = c.y.clone();
                dense.push(c);
            }
            out = cur;
        }
        (next, StepCache { cell, feature, dense }, out)
    }

    /// One inference step.
    pub fn step(&self, x: &[f64], state: &RecurrentState) -> Result<(Vec<f64>, RecurrentState)> {
        self.check_input(x, state)?;
        let (next, _, y) = self.step_cached(x, state, true);
        Ok((y, next))
    }

    /// Runs a whole sequence, returning per-step outputs and the final state.
    pub fn predict_sequence(&self, inputs: &[Vec<f64>], state: &RecurrentState) -> Result<(Vec<Vec<f64>>, RecurrentState)> {
        let mut s = state.clone();
        let mut ys = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (y, next) = self.step(x, &s)?;
            ys.push(y);
            s = next;
        }
        Ok((ys, s))
    }
}

fn check_sequences(net: &Network, inputs: &[Vec<f64>], targets: &[Vec<f64>], at: LossAt) -> Result<()> {
    if inputs.is_empty() {
        return Err(FddError::Shape("empty input sequence".into()));
    }
    let ok = match at {
        LossAt::EveryStep => targets.len() == inputs.len(),
        LossAt::LastStep => targets.len() == 1 || targets.len() == inputs.len(),
    };
    if !ok {
        return Err(FddError::Shape(format!(
            "{} targets for {} inputs",
            targets.len(),
            inputs.len()
        )));
    }
    if targets.iter().any(|t| t.len() != net.output_size()) {
        return Err(FddError::Shape(format!("targets must have width {}", net.output_size())));
    }
    Ok(())
}

fn target_for(targets: &[Vec<f64>], step: usize, steps: usize, at: LossAt) -> Option<&[f64]> {
    match at {
        LossAt::EveryStep => Some(&targets[step]),
        LossAt::LastStep if step + 1 == steps => targets.last().map(Vec::as_slice),
        LossAt::LastStep => None,
    }
}

/// Scalar sequence loss from a forward pass only.
pub fn sequence_loss(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    kind: LossKind,
    at: LossAt,
    state: &RecurrentState,
) -> Result<f64> {
    check_sequences(net, inputs, targets, at)?;
    let steps = inputs.len();
    let counted = if at == LossAt::EveryStep { steps } else { 1 };
    let mut s = state.clone();
    let mut total = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let (y, next) = net.step(x, &s)?;
        if let Some(t) = target_for(targets, k, steps, at) {
            total += step_loss_and_grad(kind, &y, t, 1.0).0;
        }
        s = next;
    }
    Ok(total / counted as f64)
}

/// Reverse-mode gradients of the mean per-step loss, unrolled through time.
pub fn backward(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    kind: LossKind,
    at: LossAt,
    initial: &RecurrentState,
) -> Result<Backprop> {
    let mut grads = net.zeros_like();
    let (loss, clamped, final_state) = backward_into(net, inputs, targets, kind, at, initial, &mut grads)?;
    Ok(Backprop {
        loss,
        clamped,
        grads,
        final_state,
    })
}

/// As [`backward`], adding the gradients into `grads`. Returns
/// (loss, clamped count, final state).
pub fn backward_into(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    kind: LossKind,
    at: LossAt,
    initial: &RecurrentState,
    grads: &mut Network,
) -> Result<(f64, usize, RecurrentState)> {
    check_sequences(net, inputs, targets, at)?;
    net.check_input(&inputs[0], initial)?;
    let steps = inputs.len();
    let counted = if at == LossAt::EveryStep { steps } else { 1 };
    let scale = 1.0 / counted as f64;

    let mut caches = Vec::with_capacity(steps);
    let mut out_grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(steps);
    let mut state = initial.clone();
    let mut loss = 0.0;
    let mut clamped = 0;
    for (k, x) in inputs.iter().enumerate() {
        if x.len() != net.input_size() {
            return Err(FddError::Shape(format!("step {k}: expected {} inputs", net.input_size())));
        }
        let target = target_for(targets, k, steps, at);
        let (next, cache, y) = net.step_cached(x, &state, target.is_some());
        match target {
            Some(t) => {
                let (l, dy, c) = step_loss_and_grad(kind, &y, t, scale);
                if !l.is_finite() {
                    return Err(FddError::Numeric {
                        context: "loss".into(),
                        step: k,
                    });
                }
                loss += l * scale;
                clamped += c;
                let out_layer = &net.dense[net.dense.len() - 1];
                let out_cache = &cache.dense[cache.dense.len() - 1];
                let dz = if kind == LossKind::CrossEntropy && out_layer.activation == Activation::Softmax {
                    // Softmax and cross-entropy combine to (p - t).
                    y.iter().zip(t).map(|(p, t)| scale * (p - t)).collect()
                } else {
                    let mut dz_out = vec![0.0; dy.len()];
                    out_layer.activation.backward(&out_cache.z, &out_cache.y, &dy, &mut dz_out);
                    dz_out
                };
                out_grads.push(Some(dz));
            }
            None => out_grads.push(None),
        }
        caches.push(cache);
        state = next;
    }

    let hidden = net.hidden_size();
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let last = net.dense.len() - 1;
    for k in (0..steps).rev() {
        let cache = &caches[k];
        let mut dfeature = vec![0.0; cache.feature.len()];
        if let Some(dout) = &out_grads[k] {
            // `dout` is already a pre-activation gradient for the output layer.
            let mut d = dout.clone();
            for l in (0..net.dense.len()).rev() {
                let layer_in = if l == 0 { &cache.feature } else { &cache.dense[l - 1].y };
                let dz = if l == last {
                    d
                } else {
                    let mut dz = vec![0.0; d.len()];
                    let layer = &net.dense[l];
                    layer.activation.backward(&cache.dense[l].z, &cache.dense[l].y, &d, &mut dz);
                    dz
                };
                d = net.dense[l].backward_from_preactivation(layer_in, &dz, &mut grads.dense[l]);
            }
            dfeature = d;
        }
        match (&net.recurrent, &mut grads.recurrent, &cache.cell) {
            (Some(RecurrentLayer::Lstm(cell)), Some(RecurrentLayer::Lstm(g)), Some(CellCache::Lstm(c))) => {
                let dh: Vec<f64> = dfeature.iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (_, dh_prev, dc_prev) = cell.backward(c, &dh, &dc_next, g);
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            (Some(RecurrentLayer::Gru(cell)), Some(RecurrentLayer::Gru(g)), Some(CellCache::Gru(c))) => {
                let dh: Vec<f64> = dfeature.iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (_, dh_prev) = cell.backward(c, &dh, g);
                dh_next = dh_prev;
            }
            _ => {}
        }
    }
    Ok((loss, clamped, state))
}
