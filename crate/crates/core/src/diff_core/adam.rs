use crate::error::{Error, Result};
use crate::real::Real;

use super::ParamBlock;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates for one [`ParamBlock`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            config,
        }
    }

    pub fn for_block(block: &ParamBlock<T>, config: AdamConfig) -> Self {
        Self::new(block.len(), config)
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<T: Real>(
    param: &mut ParamBlock<T>,
    grad: &[T],
    state: &mut AdamState<T>,
) -> Result<()> {
    if grad.len() != param.len() {
        return Err(Error::shape("adam_step grad", param.len(), grad.len()));
    }
    if state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::shape("adam_step state", param.len(), state.m.len()));
    }
    state.t += 1;
    let cfg = state.config;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let lr = T::lit(cfg.lr);
    let eps = T::lit(cfg.eps);
    let t = state.t as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let values = param.values_mut();
    for i in 0..values.len() {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
