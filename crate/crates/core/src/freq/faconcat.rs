use crate::error::{Error, Result};
use crate::layers::{cached, Conv2d, ConvSpec, Layer, Param};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Ramp `V(f) = f / F`, `f = 0..F`.
pub fn frequency_ramp(freq: usize) -> Vec<f64> {
    (0..freq).map(|f| f as f64 / freq as f64).collect()
}

/// Convolution over the input with a constant frequency-ramp channel appended.
#[derive(Debug, Clone)]
pub struct FaConcatConv {
    in_channels: usize,
    pub conv: Conv2d,
    input_shape: Option<Shape>,
}

impl FaConcatConv {
    /// `spec` describes the visible input; the inner convolution takes one more channel.
    pub fn new(spec: ConvSpec, rng: &mut Rng) -> Result<Self> {
        let inner = ConvSpec {
            in_channels: spec.in_channels + 1,
            ..spec
        };
        Ok(Self {
            in_channels: spec.in_channels,
            conv: Conv2d::new(inner, rng)?,
            input_shape: None,
        })
    }

    /// Input with the ramp appended as the last channel.
    pub fn augment(&self, x: &Tensor) -> Result<Tensor> {
        if x.channels() != self.in_channels {
            return Err(Error::mismatch("faconcat input channels", self.in_channels, x.channels()));
        }
        let [n_len, c_len, t_len, f_len] = x.shape();
        let ramp = frequency_ramp(f_len);
        let plane = t_len * f_len;
        let mut data = Vec::with_capacity(n_len * (c_len + 1) * plane);
        for item in x.data().chunks_exact(c_len * plane) {
            data.extend_from_slice(item);
            for _ in 0..t_len {
                data.extend_from_slice(&ramp);
            }
        }
        Tensor::new([n_len, c_len + 1, t_len, f_len], data)
    }
}

impl Layer for FaConcatConv {
    fn name(&self) -> String {
        format!("faconcat({})", self.conv.name())
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let augmented = self.augment(x)?;
        let y = self.conv.forward(&augmented)?;
        self.input_shape = Some(x.shape());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let shape = *cached(&self.input_shape, &name)?;
        let [n_len, c_len, t_len, f_len] = shape;
        let daug = self.conv.backward(dy)?;
        let plane = t_len * f_len;
        let mut data = Vec::with_capacity(n_len * c_len * plane);
        for item in daug.data().chunks_exact((c_len + 1) * plane) {
            data.extend_from_slice(&item[..c_len * plane]);
        }
        Tensor::new(shape, data)
    }

    fn params(&self) -> Vec<&Param> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.conv.params_mut()
    }
}
