use serde::{Deserialize, Serialize};

use crate::nn::{ParamStore, Tensor};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with zero-initialized moments.
#[derive(Debug, Clone)]
pub struct AdamState<T = f32> {
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect::<Vec<_>>()
        };
        AdamState {
            first_moment: zeros(),
            second_moment: zeros(),
            step_count: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            learning_rate: config.learning_rate,
        }
    }

    /// `learning_rate *= factor`, applied once per epoch.
    pub fn decay_lr(&mut self, factor: f64) {
        debug_assert!(factor > 0.0 && factor <= 1.0);
        self.learning_rate *= factor;
    }
}

/// One Adam update of every parameter from its gradient buffer.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, state: &mut AdamState<T>) {
    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = T::lit(state.beta1);
    let b2 = T::lit(state.beta2);
    let one = T::one();
    let correction1 = T::lit(1.0 - state.beta1.powi(t));
    let correction2 = T::lit(1.0 - state.beta2.powi(t));
    let lr = T::lit(state.learning_rate);
    let eps = T::lit(state.epsilon);
    for ((entry, m), v) in params
        .entries_mut()
        .iter_mut()
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        let grads = entry.grad.data();
        for (((p, &g), m), v) in entry
            .value
            .data_mut()
            .iter_mut()
            .zip(grads)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
