//! Central finite-difference verification of [`backward`].

use super::loss::LossKind;
use super::network::{backward, sequence_loss, LossAt, Network};
use super::RecurrentState;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative error with an absolute floor so that vanishing derivatives are
/// compared on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Perturbs every parameter by `±h` and compares the central difference of
/// the sequence loss with the analytic gradient.
pub fn check_gradients(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    kind: LossKind,
    at: LossAt,
    initial: &RecurrentState,
    h: f64,
) -> Result<GradCheckReport> {
    let analytic: Vec<f64> = backward(net, inputs, targets, kind, at, initial)?
        .grads
        .param_slices()
        .concat();
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    let blocks: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    let mut flat = 0;
    for (b, &len) in blocks.iter().enumerate() {
        for k in 0..len {
            let orig = probe.param_slices()[b][k];
            probe.param_slices_mut()[b][k] = orig + h;
            let plus = sequence_loss(&probe, inputs, targets, kind, at, initial)?;
            probe.param_slices_mut()[b][k] = orig - h;
            let minus = sequence_loss(&probe, inputs, targets, kind, at, initial)?;
            probe.param_slices_mut()[b][k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[flat], numeric, 1e-6);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = flat;
            }
            report.checked += 1;
            flat += 1;
        }
    }
    Ok(report)
}
