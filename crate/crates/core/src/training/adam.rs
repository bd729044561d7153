use thiserror::Error;

use crate::network::{ParamKind, Parameter};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdamError {
    #[error("parameter {index} has {param} values but its gradient has {grad}")]
    GradShape { index: usize, param: usize, grad: usize },
    #[error("optimizer state holds {state} tensors for {params} parameters")]
    StateShape { state: usize, params: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Shrink weights directly instead of adding `wd * param` to the gradient.
    pub decoupled: bool,
    /// Also decay sinc cutoffs and layer-norm parameters.
    pub decay_all: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 2e-2,
            decoupled: true,
            decay_all: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Parameter]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    params: &mut [Parameter],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), AdamError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(AdamError::StateShape {
            state: state.m.len().min(grads.len()),
            params: params.len(),
        });
    }
    for (index, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.value.len() != g.len() || state.m[index].len() != g.len() || state.v[index].len() != g.len() {
            return Err(AdamError::GradShape {
                index,
                param: p.value.len(),
                grad: g.len(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let decays = cfg.weight_decay != 0.0 && (cfg.decay_all || p.kind == ParamKind::Weight);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            let mut g = grads[i][j];
            if decays && !cfg.decoupled {
                g += cfg.weight_decay * *w;
            }
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            if decays && cfg.decoupled {
                *w -= cfg.learning_rate * cfg.weight_decay * *w;
            }
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
