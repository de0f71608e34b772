//! Long short-term memory cell.
//!
//! ```text
//! f = σg(W_f x + U_f h + b_f)
//! i = σg(W_i x + U_i h + b_i)
//! o = σg(W_o x + U_o h + b_o)
//! c' = f ∘ c + i ∘ tanh(W_c x + U_c h + b_c)
//! h' = o ∘ tanh(c')
//! ```
//!
//! The gate nonlinearity σg is configurable (logistic or hard sigmoid); the
//! candidate and output squashing are always tanh.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::matrix::Matrix;
use super::RecurrentState;
use crate::error::{FddError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    pub u_f: Matrix,
    pub u_i: Matrix,
    pub u_o: Matrix,
    pub u_c: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
    pub gate_activation: Activation,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    zf: Vec<f64>,
    f: Vec<f64>,
    zi: Vec<f64>,
    i: Vec<f64>,
    zo: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(inputs: usize, hidden: usize, gate_activation: Activation) -> Self {
        let w = || Matrix::zeros(hidden, inputs);
        let u = || Matrix::zeros(hidden, hidden);
        LstmCell {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            u_f: u(),
            u_i: u(),
            u_o: u(),
            u_c: u(),
            b_f: vec![0.0; hidden],
            b_i: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
            gate_activation,
        }
    }

    /// Glorot-uniform weights, zero biases except a unit forget bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, gate_activation: Activation, rng: &mut R) -> Self {
        LstmCell {
            w_f: Matrix::glorot(hidden, inputs, rng),
            w_i: Matrix::glorot(hidden, inputs, rng),
            w_o: Matrix::glorot(hidden, inputs, rng),
            w_c: Matrix::glorot(hidden, inputs, rng),
            u_f: Matrix::glorot(hidden, hidden, rng),
            u_i: Matrix::glorot(hidden, hidden, rng),
            u_o: Matrix::glorot(hidden, hidden, rng),
            u_c: Matrix::glorot(hidden, hidden, rng),
            b_f: vec![1.0; hidden],
            ..Self::zeros(inputs, hidden, gate_activation)
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.hidden(), self.gate_activation)
    }

    pub fn inputs(&self) -> usize {
        self.w_f.cols
    }

    pub fn hidden(&self) -> usize {
        self.w_f.rows
    }

    pub fn validate(&self) -> Result<()> {
        let (n, h) = (self.inputs(), self.hidden());
        for w in [&self.w_f, &self.w_i, &self.w_o, &self.w_c] {
            w.validate()?;
            if (w.rows, w.cols) != (h, n) {
                return Err(FddError::Shape(format!("LSTM input weights must be {h}x{n}")));
            }
        }
        for u in [&self.u_f, &self.u_i, &self.u_o, &self.u_c] {
            u.validate()?;
            if (u.rows, u.cols) != (h, h) {
                return Err(FddError::Shape(format!("LSTM recurrent weights must be {h}x{h}")));
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_o, &self.b_c] {
            if b.len() != h || b.iter().any(|x| !x.is_finite()) {
                return Err(FddError::Shape(format!("LSTM biases must hold {h} finite values")));
            }
        }
        if !matches!(self.gate_activation, Activation::Logistic | Activation::HardSigmoid) {
            return Err(FddError::Shape("LSTM gate activation must be logistic or hard-sigmoid".into()));
        }
        Ok(())
    }

    fn preact(&self, w: &Matrix, u: &Matrix, b: &[f64], x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut z = b.to_vec();
        w.mul_vec_acc(x, &mut z);
        u.mul_vec_acc(h, &mut z);
        z
    }

    pub fn forward_cached(&self, x: &[f64], state: &RecurrentState) -> (RecurrentState, LstmCache) {
        let h = &state.h;
        let gate = |z: &[f64]| -> Vec<f64> { z.iter().map(|&v| self.gate_activation.scalar(v)).collect() };
        let zf = self.preact(&self.w_f, &self.u_f, &self.b_f, x, h);
        let zi = self.preact(&self.w_i, &self.u_i, &self.b_i, x, h);
        let zo = self.preact(&self.w_o, &self.u_o, &self.b_o, x, h);
        let zc = self.preact(&self.w_c, &self.u_c, &self.b_c, x, h);
        let (f, i, o) = (gate(&zf), gate(&zi), gate(&zo));
        let g: Vec<f64> = zc.iter().map(|v| v.tanh()).collect();
        let hidden = self.hidden();
        let mut c = vec![0.0; hidden];
        let mut tanh_c = vec![0.0; hidden];
        let mut h_new = vec![0.0; hidden];
        for k in 0..hidden {
            c[k] = f[k] * state.c[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h_new[k] = o[k] * tanh_c[k];
        }
        let cache = LstmCache {
            x: x.to_vec(),
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            zf,
            f,
            zi,
            i,
            zo,
            o,
            g,
            tanh_c,
        };
        (RecurrentState { h: h_new, c }, cache)
    }

    /// Backpropagates one step. Takes gradients w.r.t. the new `h` and `c`,
    /// accumulates into `grad`, and returns gradients w.r.t. (x, h_prev, c_prev).
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hidden = self.hidden();
        let sg = self.gate_activation;
        let mut dzf = vec![0.0; hidden];
        let mut dzi = vec![0.0; hidden];
        let mut dzo = vec![0.0; hidden];
        let mut dzc = vec![0.0; hidden];
        let mut dc_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let d_o = dh[k] * cache.tanh_c[k];
            let dct = dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            let d_f = dct * cache.c_prev[k];
            let d_i = dct * cache.g[k];
            let d_g = dct * cache.i[k];
            dc_prev[k] = dct * cache.f[k];
            dzf[k] = d_f * sg.scalar_derivative(cache.zf[k], cache.f[k]);
            dzi[k] = d_i * sg.scalar_derivative(cache.zi[k], cache.i[k]);
            dzo[k] = d_o * sg.scalar_derivative(cache.zo[k], cache.o[k]);
            dzc[k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
        }
        let mut dx = vec![0.0; self.inputs()];
        let mut dh_prev = vec![0.0; hidden];
        let blocks: [(&Vec<f64>, &Matrix, &Matrix, &mut Matrix, &mut Matrix, &mut Vec<f64>); 4] = [
            (&dzf, &self.w_f, &self.u_f, &mut grad.w_f, &mut grad.u_f, &mut grad.b_f),
            (&dzi, &self.w_i, &self.u_i, &mut grad.w_i, &mut grad.u_i, &mut grad.b_i),
            (&dzo, &self.w_o, &self.u_o, &mut grad.w_o, &mut grad.u_o, &mut grad.b_o),
            (&dzc, &self.w_c, &self.u_c, &mut grad.w_c, &mut grad.u_c, &mut grad.b_c),
        ];
        for (dz, w, u, gw, gu, gb) in blocks {
            gw.outer_acc(dz, &cache.x);
            gu.outer_acc(dz, &cache.h_prev);
            for (b, d) in gb.iter_mut().zip(dz.iter()) {
                *b += d;
            }
            w.tr_mul_vec_acc(dz, &mut dx);
            u.tr_mul_vec_acc(dz, &mut dh_prev);
        }
        (dx, dh_prev, dc_prev)
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.w_f.data,
            &self.w_i.data,
            &self.w_o.data,
            &self.w_c.data,
            &self.u_f.data,
            &self.u_i.data,
            &self.u_o.data,
            &self.u_c.data,
            &self.b_f,
            &self.b_i,
            &self.b_o,
            &self.b_c,
        ]
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_f.data,
            &mut self.w_i.data,
            &mut self.w_o.data,
            &mut self.w_c.data,
            &mut self.u_f.data,
            &mut self.u_i.data,
            &mut self.u_o.data,
            &mut self.u_c.data,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_c,
        ]
    }
}

pub(crate) fn check_cell_dims(inputs: usize, hidden: usize, x: &[f64], state: &RecurrentState) -> Result<()> {
    if x.len() != inputs || state.h.len() != hidden || state.c.len() != hidden {
        return Err(FddError::Shape(format!(
            "cell expects input {inputs} and state {hidden}, got input {} and state ({}, {})",
            x.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    Ok(())
}

/// One checked LSTM step.
pub fn lstm_step(params: &LstmCell, x: &[f64], state: &RecurrentState) -> Result<RecurrentState> {
    check_cell_dims(params.inputs(), params.hidden(), x, state)?;
    Ok(params.forward_cached(x, state).0)
}

