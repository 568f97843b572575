//! Layer contract and the standard layer zoo.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod loss;
mod pool;

pub use activation::{ContextGating, Relu, Sigmoid};
pub use batchnorm::BatchNorm;
pub use conv::{conv2d, conv2d_backward, Conv2d, ConvSpec, PaddingMode};
pub use linear::{GlobalAvgPool, Linear};
pub use loss::{softmax_cross_entropy, SoftmaxCrossEntropy};
pub use pool::{Pool, PoolKind, PoolSpec};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A learnable parameter with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, len: usize) -> Self {
        Self::new(name, vec![0.0; len])
    }

    /// Kaiming-uniform initialisation with bound `sqrt(6 / fan_in)`.
    pub fn kaiming_uniform(name: impl Into<String>, len: usize, fan_in: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        Self::new(name, (0..len).map(|_| rng.uniform(-bound, bound)).collect())
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Forward/backward contract every network block satisfies.
///
/// `forward` caches whatever `backward` needs; `backward` receives the
/// cotangent of the output, accumulates parameter gradients and returns the
/// cotangent of the input.
pub trait Layer: Send {
    fn name(&self) -> String;

    fn forward(&mut self, x: &Tensor) -> Result<Tensor>;

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// Switches between training and inference behaviour (batch statistics).
    fn set_training(&mut self, _training: bool) {}

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

impl Layer for Box<dyn Layer> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        (**self).forward(x)
    }
    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        (**self).backward(dy)
    }
    fn params(&self) -> Vec<&Param> {
        (**self).params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        (**self).params_mut()
    }
    fn set_training(&mut self, training: bool) {
        (**self).set_training(training)
    }
}

pub(crate) fn cached<'a, T>(cache: &'a Option<T>, layer: &str) -> Result<&'a T> {
    cache.as_ref().ok_or_else(|| Error::BackwardBeforeForward {
        layer: layer.to_string(),
    })
}

pub(crate) fn expect_shape(context: &str, expected: crate::tensor::Shape, actual: &Tensor) -> Result<()> {
    if actual.shape() != expected {
        return Err(Error::mismatch(context, expected, actual.shape()));
    }
    Ok(())
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
