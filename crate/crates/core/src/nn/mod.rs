//! Dense layers, LSTM and GRU cells, losses, backpropagation through time
//! and ADAM.

pub mod activation;
pub mod adam;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod loss;
pub mod lstm;
pub mod matrix;
pub mod network;

use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use adam::{adam_update, AdamConfig, OptimizerState};
pub use dense::{dense_forward, DenseLayer};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use gru::{gru_step, GruCell};
pub use loss::{loss, one_hot, LossKind, LossValue};
pub use lstm::{lstm_step, LstmCell};
pub use matrix::Matrix;
pub use network::{backward, backward_into, sequence_loss, Backprop, LossAt, Network, RecurrentLayer};

/// Hidden and cell state of a recurrent layer (`c` is unused by GRU).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        RecurrentState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}
