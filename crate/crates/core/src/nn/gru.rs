//! Gated recurrent unit.
//!
//! ```text
//! z  = σg(W_z x + U_z h + b_z)
//! r  = σg(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r ∘ h) + b_h)
//! h' = (1 − z) ∘ h + z ∘ h~
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::lstm::check_cell_dims;
use super::matrix::Matrix;
use super::RecurrentState;
use crate::error::{FddError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
    pub gate_activation: Activation,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    zz: Vec<f64>,
    z: Vec<f64>,
    zr: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    n: Vec<f64>,
}

impl GruCell {
    pub fn zeros(inputs: usize, hidden: usize, gate_activation: Activation) -> Self {
        let w = || Matrix::zeros(hidden, inputs);
        let u = || Matrix::zeros(hidden, hidden);
        GruCell {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
            gate_activation,
        }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, gate_activation: Activation, rng: &mut R) -> Self {
        GruCell {
            w_z: Matrix::glorot(hidden, inputs, rng),
            w_r: Matrix::glorot(hidden, inputs, rng),
            w_h: Matrix::glorot(hidden, inputs, rng),
            u_z: Matrix::glorot(hidden, hidden, rng),
            u_r: Matrix::glorot(hidden, hidden, rng),
            u_h: Matrix::glorot(hidden, hidden, rng),
            ..Self::zeros(inputs, hidden, gate_activation)
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs(), self.hidden(), self.gate_activation)
    }

    pub fn inputs(&self) -> usize {
        self.w_z.cols
    }

    pub fn hidden(&self) -> usize {
        self.w_z.rows
    }

    pub fn validate(&self) -> Result<()> {
        let (n, h) = (self.inputs(), self.hidden());
        for w in [&self.w_z, &self.w_r, &self.w_h] {
            w.validate()?;
            if (w.rows, w.cols) != (h, n) {
                return Err(FddError::Shape(format!("GRU input weights must be {h}x{n}")));
            }
        }
        for u in [&self.u_z, &self.u_r, &self.u_h] {
            u.validate()?;
            if (u.rows, u.cols) != (h, h) {
                return Err(FddError::Shape(format!("GRU recurrent weights must be {h}x{h}")));
            }
        }
        for b in [&self.b_z, &self.b_r, &self.b_h] {
            if b.len() != h || b.iter().any(|x| !x.is_finite()) {
                return Err(FddError::Shape(format!("GRU biases must hold {h} finite values")));
            }
        }
        if !matches!(self.gate_activation, Activation::Logistic | Activation::HardSigmoid) {
            return Err(FddError::Shape("GRU gate activation must be logistic or hard-sigmoid".into()));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &[f64], state: &RecurrentState) -> (RecurrentState, GruCache) {
        let hidden = self.hidden();
        let h = &state.h;
        let sg = self.gate_activation;
        let mut zz = self.b_z.clone();
        self.w_z.mul_vec_acc(x, &mut zz);
        self.u_z.mul_vec_acc(h, &mut zz);
        let mut zr = self.b_r.clone();
        self.w_r.mul_vec_acc(x, &mut zr);
        self.u_r.mul_vec_acc(h, &mut zr);
        let z: Vec<f64> = zz.iter().map(|&v| sg.scalar(v)).collect();
        let r: Vec<f64> = zr.iter().map(|&v| sg.scalar(v)).collect();
        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let mut a = self.b_h.clone();
        self.w_h.mul_vec_acc(x, &mut a);
        self.u_h.mul_vec_acc(&rh, &mut a);
        let n: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..hidden).map(|k| (1.0 - z[k]) * h[k] + z[k] * n[k]).collect();
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h.clone(),
            zz,
            z,
            zr,
            r,
            rh,
            n,
        };
        (
            RecurrentState {
                h: h_new,
                c: state.c.clone(),
            },
            cache,
        )
    }

    /// Backpropagates one step; returns gradients w.r.t. (x, h_prev).
    pub fn backward(&self, cache: &GruCache, dh: &[f64], grad: &mut GruCell) -> (Vec<f64>, Vec<f64>) {
        let hidden = self.hidden();
        let sg = self.gate_activation;
        let mut dh_prev = vec![0.0; hidden];
        let mut da = vec![0.0; hidden];
        let mut dzz = vec![0.0; hidden];
        for k in 0..hidden {
            let dz = dh[k] * (cache.n[k] - cache.h_prev[k]);
            let dn = dh[k] * cache.z[k];
            dh_prev[k] = dh[k] * (1.0 - cache.z[k]);
            da[k] = dn * (1.0 - cache.n[k] * cache.n[k]);
            dzz[k] = dz * sg.scalar_derivative(cache.zz[k], cache.z[k]);
        }
        grad.w_h.outer_acc(&da, &cache.x);
        grad.u_h.outer_acc(&da, &cache.rh);
        for (b, d) in grad.b_h.iter_mut().zip(&da) {
            *b += d;
        }
        let mut drh = vec![0.0; hidden];
        self.u_h.tr_mul_vec_acc(&da, &mut drh);
        let mut dzr = vec![0.0; hidden];
        for k in 0..hidden {
            let dr = drh[k] * cache.h_prev[k];
            dh_prev[k] += drh[k] * cache.r[k];
            dzr[k] = dr * sg.scalar_derivative(cache.zr[k], cache.r[k]);
        }
        let mut dx = vec![0.0; self.inputs()];
        self.w_h.tr_mul_vec_acc(&da, &mut dx);
        for (dzv, w, u, gw, gu, gb) in [
            (&dzz, &self.w_z, &self.u_z, &mut grad.w_z, &mut grad.u_z, &mut grad.b_z),
            (&dzr, &self.w_r, &self.u_r, &mut grad.w_r, &mut grad.u_r, &mut grad.b_r),
        ] {
            gw.outer_acc(dzv, &cache.x);
            gu.outer_acc(dzv, &cache.h_prev);
            for (b, d) in gb.iter_mut().zip(dzv.iter()) {
                *b += d;
            }
            w.tr_mul_vec_acc(dzv, &mut dx);
            u.tr_mul_vec_acc(dzv, &mut dh_prev);
        }
        (dx, dh_prev)
    }

    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.w_z.data,
            &self.w_r.data,
            &self.w_h.data,
            &self.u_z.data,
            &self.u_r.data,
            &self.u_h.data,
            &self.b_z,
            &self.b_r,
            &self.b_h,
        ]
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_z.data,
            &mut self.w_r.data,
            &mut self.w_h.data,
            &mut self.u_z.data,
            &mut self.u_r.data,
            &mut self.u_h.data,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

/// One checked GRU step. The cell state `c` is carried through untouched.
pub fn gru_step(params: &GruCell, x: &[f64], state: &RecurrentState) -> Result<RecurrentState> {
    check_cell_dims(params.inputs(), params.hidden(), x, state)?;
    Ok(params.forward_cached(x, state).0)
}
