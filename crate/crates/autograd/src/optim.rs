//! Adam optimizer over graph leaves.

use crate::graph::{Gradients, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept positionally, so a given
/// optimizer must always be stepped with the same parameter list.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Var]) -> Self {
        let first: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second = first.clone();
        Adam {
            config,
            step: 0,
            first,
            second,
        }
    }

    /// Rebuild from saved state.
    pub fn from_state(config: AdamConfig, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Self {
        assert_eq!(first.len(), second.len());
        Adam {
            config,
            step,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Apply one update. Parameters without a gradient in `grads` are left
    /// untouched, moments included. Updated parameters are fresh leaves that
    /// keep their `requires_grad` flag.
    pub fn step(&mut self, params: &mut [&mut Var], grads: &Gradients) {
        assert_eq!(params.len(), self.first.len(), "parameter list changed");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads.get(p) else { continue };
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let mut value = p.value().clone();
            for (((x, &gi), mi), vi) in value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
            let requires_grad = p.requires_grad();
            **p = Var::leaf(value, requires_grad);
        }
    }
}
