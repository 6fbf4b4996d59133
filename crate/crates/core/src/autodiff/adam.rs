//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::graph::{AutodiffError, Matrix};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment estimates plus the step counter. Moments are kept in
/// the same declared order as the parameter list they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamState {
    /// Zero-initialized moments matching the given parameter shapes.
    pub fn new(params: &[Matrix]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Matrix::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| Matrix::zeros(p.raw_dim())).collect(),
        }
    }
}

/// One optimizer step over an ordered parameter list. Weight decay is
/// decoupled from the moment estimates: p ← p − lr·(m̂/(√v̂+ε) + wd·p).
pub fn adam_step(
    params: &mut [Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<(), AutodiffError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AutodiffError::Contract(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if hp.lr <= 0.0 {
        return Err(AutodiffError::Contract(format!(
            "adam_step requires lr > 0, got {}",
            hp.lr
        )));
    }
    for i in 0..params.len() {
        if params[i].dim() != grads[i].dim() || params[i].dim() != state.m[i].dim() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                detail: format!(
                    "param {} is {:?}, grad {:?}, moments {:?}",
                    i,
                    params[i].dim(),
                    grads[i].dim(),
                    state.m[i].dim()
                ),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - hp.beta1.powi(t);
    let bias2 = 1.0 - hp.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= hp.lr * (m_hat / (v_hat.sqrt() + hp.eps) + hp.weight_decay * *p);
            });
    }
    Ok(())
}
