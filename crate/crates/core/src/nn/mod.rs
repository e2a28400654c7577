//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! A layer computes `Y = act(X W + b)` on a batch `X` (one example per row),
//! with `W` stored as `in x out`. Hidden layers use the network's hidden
//! activation, the last layer its output activation.

mod gradcheck;
mod loss;
mod optim;

pub use gradcheck::{grad_check, max_relative_error, LossConfig, LossKind, NetworkObjective, Objective, FD_STEP};
pub use loss::{joint_loss, mse_reconstruction, softmax_cross_entropy, softmax_rows};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

impl Activation {
    fn apply<T: Scalar>(self, m: &mut Matrix<T>) {
        if self == Activation::Relu {
            for v in m.as_mut_slice() {
                if !(*v > T::zero()) {
                    *v = T::zero();
                }
            }
        }
    }

    /// Multiplies `grad` by the activation derivative, read off the activation output.
    fn backprop<T: Scalar>(self, output: &Matrix<T>, grad: &mut Matrix<T>) {
        if self == Activation::Relu {
            for (g, &y) in grad.as_mut_slice().iter_mut().zip(output.as_slice()) {
                if !(y > T::zero()) {
                    *g = T::zero();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `in x out`.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork<T> {
    input_dim: usize,
    layers: Vec<DenseLayer<T>>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Activations of every layer from one forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub activations: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn output(&self) -> &Matrix<T> {
        self.activations.last().expect("trace holds at least the input")
    }

    pub fn into_output(mut self) -> Matrix<T> {
        self.activations.pop().expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

/// Parameter gradients mirroring a [`DenseNetwork`] layer for layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub layers: Vec<LayerGradient<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(net: &DenseNetwork<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![T::zero(); l.output_dim()],
                })
                .collect(),
        }
    }

    /// Gradients in the same order as [`DenseNetwork::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|v| *v == T::zero())
    }
}

impl<T: Scalar> DenseNetwork<T> {
    /// Glorot-uniform weights and zero biases, drawn from a ChaCha stream keyed by `seed`.
    pub fn new(
        dims: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.random_range(-limit..limit)))
                    .collect();
                DenseLayer {
                    weights: Matrix::from_vec(fan_in, fan_out, data).expect("sized above"),
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self {
            input_dim: dims[0],
            layers,
            hidden_activation,
            output_activation,
        })
    }

    /// Relu hidden layers and a linear output layer.
    pub fn relu_mlp(dims: &[usize], seed: u64) -> Result<Self> {
        Self::new(dims, Activation::Relu, Activation::Linear, seed)
    }

    /// A network with no layers: the output is the input.
    pub fn identity(dim: usize) -> Self {
        Self {
            input_dim: dim,
            layers: Vec::new(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }

    pub fn from_layers(
        layers: Vec<DenseLayer<T>>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidConfig("network needs at least one layer".into()))?;
        let input_dim = first.input_dim();
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::InvalidConfig(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self {
            input_dim,
            layers,
            hidden_activation,
            output_activation,
        })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.output_dim())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(|l| l.output_dim()))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer: weights row-major, then bias.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn parameter_mut(&mut self, mut index: usize) -> Option<&mut T> {
        for l in &mut self.layers {
            let w = l.weights.as_slice().len();
            if index < w {
                return Some(&mut l.weights.as_mut_slice()[index]);
            }
            index -= w;
            if index < l.bias.len() {
                return Some(&mut l.bias[index]);
            }
            index -= l.bias.len();
        }
        None
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<ForwardTrace<T>> {
        if batch.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: batch.cols(),
                context: "network input",
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().expect("non-empty");
            let mut z = prev.matmul(&layer.weights)?;
            for r in 0..z.rows() {
                for (v, &b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            self.activation_of(i).apply(&mut z);
            activations.push(z);
        }
        Ok(ForwardTrace { activations })
    }

    /// Output only.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(batch)?.into_output())
    }

    /// Reverse pass: parameter gradients plus the gradient with respect to the input.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        output_grad: &Matrix<T>,
    ) -> Result<(GradientSet<T>, Matrix<T>)> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len() + 1,
                actual: trace.activations.len(),
                context: "forward trace depth",
            });
        }
        if output_grad.shape() != trace.output().shape() {
            return Err(Error::DimensionMismatch {
                expected: trace.output().as_slice().len(),
                actual: output_grad.as_slice().len(),
                context: "output gradient shape",
            });
        }
        let mut grad = output_grad.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            self.activation_of(i).backprop(&trace.activations[i + 1], &mut grad);
            let input = &trace.activations[i];
            let weights = input.transpose_matmul(&grad)?;
            let mut bias = vec![T::zero(); layer.output_dim()];
            for row in grad.row_iter() {
                for (b, &g) in bias.iter_mut().zip(row) {
                    *b += g;
                }
            }
            grad = grad.matmul_transpose(&layer.weights)?;
            layers.push(LayerGradient { weights, bias });
        }
        layers.reverse();
        Ok((GradientSet { layers }, grad))
    }
}
