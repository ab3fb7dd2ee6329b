//! Learned parameters and SGD with classical momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// A named learned tensor with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub velocity: Tensor<F>,
}

impl<F: Element> Parameter<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.shape());
        let velocity = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
            velocity,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(F::ZERO);
    }

    pub fn accumulate_grad(&mut self, g: &Tensor<F>) -> Result<()> {
        self.grad.add_assign(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-4,
            momentum: 0.5,
            epochs: 2000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive finite number"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// `v ← μ·v + g; w ← w − η·v` for every parameter.
pub fn sgd_step<F: Element>(params: &mut [Parameter<F>], cfg: &OptimizerConfig) {
    let lr = F::from_f64(cfg.learning_rate);
    let mu = F::from_f64(cfg.momentum);
    for p in params.iter_mut() {
        let (w, v, g) = (p.value.data_mut(), p.velocity.data_mut(), p.grad.data());
        for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = mu * *v + g;
            *w -= lr * *v;
        }
    }
}
