//! ADAM with L2-coupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, Network};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("betas must be in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let first: Vec<Matrix> = params.into_iter().map(Matrix::zeros_like).collect();
        let second = first.clone();
        Self {
            first,
            second,
            step: 0,
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Self::new(net.parameters())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }
}

/// Non-finite gradient in the `index`-th parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteParam {
    pub index: usize,
}

/// One ADAM update of every parameter tensor.
///
/// The decayed gradient is `g + weight_decay * w`; moments are bias-corrected.
/// All gradients are checked before any parameter is touched.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), StepError> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(StepError::Shape(format!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(StepError::Shape(format!(
                "parameter {i}: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                state.first[i].shape()
            )));
        }
        if !g.is_finite() {
            return Err(StepError::NonFinite(NonFiniteParam { index: i }));
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[i].as_mut_slice();
        let v = state.second[i].as_mut_slice();
        for (((w, &gi), mi), vi) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let gd = gi + cfg.weight_decay * *w;
            *mi = b1 * *mi + (1.0 - b1) * gd;
            *vi = b2 * *vi + (1.0 - b2) * gd * gd;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Shape(String),
    NonFinite(NonFiniteParam),
}

/// [`adam_step`] over a network, naming the offending layer on failure.
pub fn step_network(
    net: &mut Network,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = net.parameters_mut();
    adam_step(&mut p, &g, state, cfg).map_err(|e| match e {
        StepError::Shape(msg) => Error::invalid(msg),
        StepError::NonFinite(NonFiniteParam { index }) => Error::NonFiniteGradient {
            layer: index / 2,
            tensor: if index % 2 == 0 { "weights" } else { "bias" },
        },
    })
}
