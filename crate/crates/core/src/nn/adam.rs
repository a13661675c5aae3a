use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::{ParamKind, ParameterStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Inverse-time decay: `lr_t = lr / (1 + decay * t)`.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, decay: f64) -> Self {
        Self {
            learning_rate,
            decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    /// Completed update steps.
    pub step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    /// Learning rate that the next step will use.
    pub fn effective_lr(&self) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * self.step as f64)
    }

    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        Some((self.first.get(name)?.as_slice(), self.second.get(name)?.as_slice()))
    }
}

/// One bias-corrected Adam update. Frozen parameters and buffers are skipped
/// and left bit-identical.
pub fn adam_step(params: &mut ParameterStore, state: &mut AdamState, grads: &BTreeMap<String, Tensor>) -> Result<()> {
    let lr = state.effective_lr();
    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
        ..
    } = state.config;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, grad) in grads {
        if params.is_frozen(name) || params.kind(name) == Some(ParamKind::Buffer) {
            continue;
        }
        let p = params.get_mut(name)?;
        ensure!(
            p.shape() == grad.shape(),
            Dimension,
            "gradient for `{name}` has shape {:?}, parameter has {:?}",
            grad.shape(),
            p.shape()
        );
        let m = state.first.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        let v = state.second.entry(name.clone()).or_insert_with(|| vec![0.0; grad.len()]);
        for (((w, g), m), v) in p.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
