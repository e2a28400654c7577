use serde::{Deserialize, Serialize};

use super::{DenseNetwork, GradientSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(learning_rate)
        }
    }
}

/// Optimizer state for one network. Moments are kept per parameter tensor,
/// in layer order: weights then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, net: &DenseNetwork<T>) -> Self {
        let shapes: Vec<usize> = net
            .layers()
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect();
        let zeros = |on: bool| -> Vec<Vec<T>> {
            if on {
                shapes.iter().map(|&n| vec![T::zero(); n]).collect()
            } else {
                Vec::new()
            }
        };
        let adam = config.kind == OptimizerKind::Adam;
        Self {
            config,
            step: 0,
            first: zeros(adam),
            second: zeros(adam),
        }
    }

    /// Applies one update. Gradients are validated before any parameter moves.
    pub fn step(&mut self, net: &mut DenseNetwork<T>, grads: &GradientSet<T>) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::DimensionMismatch {
                expected: net.layers().len(),
                actual: grads.layers.len(),
                context: "gradient layer count",
            });
        }
        for (i, (l, g)) in net.layers().iter().zip(&grads.layers).enumerate() {
            if l.weights.shape() != g.weights.shape() || l.bias.len() != g.bias.len() {
                return Err(Error::DimensionMismatch {
                    expected: l.weights.as_slice().len() + l.bias.len(),
                    actual: g.weights.as_slice().len() + g.bias.len(),
                    context: "gradient tensor shape",
                });
            }
            if !g.weights.is_finite() {
                return Err(Error::non_finite(format!("gradient of layer {i} weights")));
            }
            if !g.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::non_finite(format!("gradient of layer {i} bias")));
            }
        }

        self.step += 1;
        let lr = T::lit(self.config.learning_rate);
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (l, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
                    sgd_update(l.weights.as_mut_slice(), g.weights.as_slice(), lr);
                    sgd_update(&mut l.bias, &g.bias, lr);
                }
            }
            OptimizerKind::Adam => {
                let b1 = self.config.beta1;
                let b2 = self.config.beta2;
                let t = self.step as i32;
                let hyper = AdamStep {
                    lr,
                    beta1: T::lit(b1),
                    beta2: T::lit(b2),
                    eps: T::lit(self.config.epsilon),
                    correction1: T::lit(1.0 - b1.powi(t)),
                    correction2: T::lit(1.0 - b2.powi(t)),
                };
                for (i, (l, g)) in net.layers_mut().iter_mut().zip(&grads.layers).enumerate() {
                    let (m, v) = (&mut self.first, &mut self.second);
                    hyper.apply(l.weights.as_mut_slice(), g.weights.as_slice(), &mut m[2 * i], &mut v[2 * i]);
                    hyper.apply(&mut l.bias, &g.bias, &mut m[2 * i + 1], &mut v[2 * i + 1]);
                }
            }
        }
        Ok(())
    }
}

fn sgd_update<T: Scalar>(params: &mut [T], grads: &[T], lr: T) {
    for (p, &g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

struct AdamStep<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    correction1: T,
    correction2: T,
}

impl<T: Scalar> AdamStep<T> {
    fn apply(&self, params: &mut [T], grads: &[T], m: &mut [T], v: &mut [T]) {
        let one = T::one();
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / self.correction1;
            let v_hat = *v / self.correction2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
