use super::{cached, expect_shape, sigmoid, Layer, Linear, Param};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn name(&self) -> String {
        "relu".into()
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.cache = Some(x.clone());
        Ok(x.map(|v| v.max(0.0)))
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = cached(&self.cache, "relu")?;
        expect_shape("relu cotangent", x.shape(), dy)?;
        let mut dx = dy.clone();
        for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= 0.0 {
                *d = 0.0;
            }
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid {
    out: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Sigmoid {
    fn name(&self) -> String {
        "sigmoid".into()
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = x.map(sigmoid);
        self.out = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let y = cached(&self.out, "sigmoid")?;
        expect_shape("sigmoid cotangent", y.shape(), dy)?;
        let mut dx = dy.clone();
        for (d, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *d *= s * (1.0 - s);
        }
        Ok(dx)
    }
}

/// Gated activation `y = x * sigmoid(W x + b)` with a per-position channel-mixing `W`.
#[derive(Debug, Clone)]
pub struct ContextGating {
    gate: Linear,
    cache: Option<(Tensor, Tensor)>,
}

impl ContextGating {
    pub fn new(channels: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            gate: Linear::new(channels, channels, rng)?,
            cache: None,
        })
    }

    pub fn gate_mut(&mut self) -> &mut Linear {
        &mut self.gate
    }
}

impl Layer for ContextGating {
    fn name(&self) -> String {
        format!("context_gating({})", self.gate.in_features())
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let g = self.gate.forward(x)?.map(sigmoid);
        let mut y = x.clone();
        for (v, s) in y.data_mut().iter_mut().zip(g.data()) {
            *v *= s;
        }
        self.cache = Some((x.clone(), g));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let (x, g) = cached(&self.cache, "context_gating")?;
        expect_shape("context gating cotangent", x.shape(), dy)?;
        let mut dx = dy.clone();
        let mut dz = dy.clone();
        for (((d, z), &xv), &s) in dx
            .data_mut()
            .iter_mut()
            .zip(dz.data_mut())
            .zip(x.data())
            .zip(g.data())
        {
            *z *= xv * s * (1.0 - s);
            *d *= s;
        }
        let through_gate = self.gate.backward(&dz)?;
        dx.add_assign(&through_gate)?;
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        self.gate.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.gate.params_mut()
    }
}
