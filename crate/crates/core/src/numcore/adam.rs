use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: BTreeMap<String, Vec<f64>>,
    second_moment: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros = |t: &Tensor| vec![0.0; t.len()];
        Self {
            config,
            step_count: 0,
            first_moment: params.iter().map(|(n, t)| (n.clone(), zeros(t))).collect(),
            second_moment: params.iter().map(|(n, t)| (n.clone(), zeros(t))).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.first_moment.get(name).map(Vec::as_slice)
    }

    /// Apply one update to every parameter; each must have a gradient.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        for (name, t) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Contract(format!("missing gradient for parameter `{name}`")))?;
            if g.len() != t.len() {
                return Err(Error::dim(t.shape(), g.shape(), "adam gradient"));
            }
            if !self.first_moment.contains_key(name) {
                return Err(Error::Contract(format!("optimizer state has no slot for `{name}`")));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (name, param) in params.iter_mut() {
            let g = grads.get(name).expect("checked above").data();
            let m = self.first_moment.get_mut(name).expect("checked above");
            let v = self.second_moment.get_mut(name).expect("checked above");
            for (((p, &gi), mi), vi) in param.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Functional form: returns the updated parameters, advancing `state`.
pub fn adam_step(params: &ParamSet, grads: &Gradients, state: &mut AdamState) -> Result<ParamSet> {
    let mut next = params.clone();
    state.step(&mut next, grads)?;
    Ok(next)
}
