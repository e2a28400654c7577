//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mse_reconstruction, softmax_cross_entropy, DenseNetwork};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Denominator floor of the relative error, so parameters with vanishing
/// gradients are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait Objective<T: Scalar> {
    fn parameter_count(&self) -> usize;
    fn parameter(&self, index: usize) -> T;
    fn set_parameter(&mut self, index: usize, value: T);
    fn loss(&self) -> Result<T>;
    fn gradient(&self) -> Result<Vec<T>>;
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over
/// all parameters, using central differences with step `step`.
pub fn max_relative_error<T: Scalar, O: Objective<T>>(objective: &mut O, step: f64) -> Result<f64> {
    let analytic = objective.gradient()?;
    let h = T::lit(step);
    let mut worst = 0.0_f64;
    for (i, &a) in analytic.iter().enumerate().take(objective.parameter_count()) {
        let original = objective.parameter(i);
        objective.set_parameter(i, original + h);
        let plus = objective.loss()?;
        objective.set_parameter(i, original - h);
        let minus = objective.loss()?;
        objective.set_parameter(i, original);
        let numeric = (plus - minus).as_f64() / (2.0 * step);
        let a = a.as_f64();
        let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error against the network input.
    Reconstruction,
    /// Softmax cross-entropy against integer labels.
    CrossEntropy,
    /// `0.5 * sum(y^2) / batch`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub batch: usize,
}

/// A network, a fixed input batch and a loss on its output.
#[derive(Debug, Clone)]
pub struct NetworkObjective<T> {
    pub net: DenseNetwork<T>,
    pub input: Matrix<T>,
    pub kind: LossKind,
    pub labels: Vec<usize>,
}

impl<T: Scalar> NetworkObjective<T> {
    fn output_loss(&self, output: &Matrix<T>) -> Result<(T, Matrix<T>)> {
        match self.kind {
            LossKind::Reconstruction => mse_reconstruction(&self.input, output),
            LossKind::CrossEntropy => softmax_cross_entropy(output, &self.labels),
            LossKind::Quadratic => {
                let batch = T::from_count(output.rows());
                let loss = output.as_slice().iter().map(|&y| y * y).sum::<T>() / (T::lit(2.0) * batch);
                Ok((loss, output.map(|y| y / batch)))
            }
        }
    }
}

impl<T: Scalar> Objective<T> for NetworkObjective<T> {
    fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    fn parameter(&self, index: usize) -> T {
        self.net.parameters()[index]
    }

    fn set_parameter(&mut self, index: usize, value: T) {
        *self.net.parameter_mut(index).expect("index in range") = value;
    }

    fn loss(&self) -> Result<T> {
        let out = self.net.predict(&self.input)?;
        Ok(self.output_loss(&out)?.0)
    }

    fn gradient(&self) -> Result<Vec<T>> {
        let trace = self.net.forward(&self.input)?;
        let (_, grad) = self.output_loss(trace.output())?;
        let (grads, _) = self.net.backward(&trace, &grad)?;
        Ok(grads.flatten())
    }
}

/// Checks `net` on a random batch drawn from `seed` under the given loss.
pub fn grad_check<T: Scalar>(net: &DenseNetwork<T>, loss: &LossConfig, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = net.input_dim();
    let input = Matrix::from_vec(
        loss.batch,
        d,
        (0..loss.batch * d).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect(),
    )?;
    let classes = net.output_dim();
    let labels = (0..loss.batch).map(|_| rng.random_range(0..classes)).collect();
    let mut objective = NetworkObjective {
        net: net.clone(),
        input,
        kind: loss.kind,
        labels,
    };
    max_relative_error(&mut objective, FD_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn relu_autoencoder_mse() {
        let net = DenseNetwork::<f64>::relu_mlp(&[4, 8, 4], 11).unwrap();
        let cfg = LossConfig {
            kind: LossKind::Reconstruction,
            batch: 6,
        };
        let err = grad_check(&net, &cfg, 1).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_net_quadratic_loss_is_near_exact() {
        let net = DenseNetwork::<f64>::new(&[5, 3, 2], Activation::Linear, Activation::Linear, 2).unwrap();
        let cfg = LossConfig {
            kind: LossKind::Quadratic,
            batch: 4,
        };
        let err = grad_check(&net, &cfg, 2).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn three_layer_relu_cross_entropy() {
        let net = DenseNetwork::<f64>::relu_mlp(&[6, 10, 8, 3], 4).unwrap();
        let cfg = LossConfig {
            kind: LossKind::CrossEntropy,
            batch: 5,
        };
        let err = grad_check(&net, &cfg, 3).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        struct Broken;
        impl Objective<f64> for Broken {
            fn parameter_count(&self) -> usize {
                1
            }
            fn parameter(&self, _: usize) -> f64 {
                1.0
            }
            fn set_parameter(&mut self, _: usize, _: f64) {}
            fn loss(&self) -> Result<f64> {
                Ok(0.0)
            }
            fn gradient(&self) -> Result<Vec<f64>> {
                Ok(vec![1.0])
            }
        }
        assert_eq!(max_relative_error(&mut Broken, FD_STEP).unwrap(), 1.0);
    }
}
