//! Adam with coupled L2 weight decay.

use alloc::format;
use alloc::vec::Vec;

use crate::nn::ParamMut;
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub step: u64,
    pub first: Vec<Tensor<T>>,
    pub second: Vec<Tensor<T>>,
}

/// One update: `g ← g + wd·p`, then bias-corrected Adam.
///
/// State tensors are created lazily on the first call.
pub fn adam_step<T: Real>(params: &mut [ParamMut<'_, T>], state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    if state.first.is_empty() {
        state.first = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len() {
        return Err(Error::InvalidConfig(format!(
            "optimizer state holds {} tensors, model has {}",
            state.first.len(),
            params.len()
        )));
    }
    for (p, m) in params.iter().zip(&state.first) {
        if p.value.shape() != m.shape() || p.grad.shape() != m.shape() {
            return Err(Error::ShapeMismatch {
                context: "adam state",
                expected: m.shape().to_vec(),
                found: p.value.shape().to_vec(),
            });
        }
        if !p.grad.all_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let (b1, b2) = (T::cast(cfg.beta1), T::cast(cfg.beta2));
    let (one_b1, one_b2) = (T::cast(1.0 - cfg.beta1), T::cast(1.0 - cfg.beta2));
    let wd = T::cast(cfg.weight_decay);
    let step_size = T::cast(cfg.learning_rate / bc1);
    let inv_sqrt_bc2 = T::cast(1.0 / libm::sqrt(bc2));
    let eps = T::cast(cfg.epsilon);
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let values = p.value.data_mut();
        let grads = p.grad.data();
        for (((w, &g), m), v) in values.iter_mut().zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
            let g = g + wd * *w;
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            *w -= step_size * *m / (v.sqrt() * inv_sqrt_bc2 + eps);
        }
    }
    Ok(())
}
