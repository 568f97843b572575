use super::{cached, expect_shape, Layer, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Channel-mixing affine map applied independently at every `(t, f)` position.
///
/// On a `(N, C, 1, 1)` tensor this is an ordinary fully connected layer.
#[derive(Debug, Clone)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, rng: &mut Rng) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::InvalidArgument("linear dimensions must be >= 1".into()));
        }
        Ok(Self {
            in_features,
            out_features,
            weight: Param::kaiming_uniform("weight", in_features * out_features, in_features, rng),
            bias: Param::zeros("bias", out_features),
            cache: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }
}

impl Layer for Linear {
    fn name(&self) -> String {
        format!("linear({}->{})", self.in_features, self.out_features)
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.channels() != self.in_features {
            return Err(Error::mismatch("linear input", self.in_features, x.channels()));
        }
        let [n_len, _, t_len, f_len] = x.shape();
        let plane = t_len * f_len;
        let mut y = Tensor::zeros_unchecked([n_len, self.out_features, t_len, f_len]);
        for n in 0..n_len {
            for o in 0..self.out_features {
                let yb = y.index(n, o, 0, 0);
                let dst = &mut y.data_mut()[yb..yb + plane];
                dst.iter_mut().for_each(|v| *v = self.bias.value[o]);
                for c in 0..self.in_features {
                    let w = self.weight.value[o * self.in_features + c];
                    let xb = x.index(n, c, 0, 0);
                    for (d, s) in dst.iter_mut().zip(&x.data()[xb..xb + plane]) {
                        *d += w * s;
                    }
                }
            }
        }
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let x = cached(&self.cache, &name)?;
        let [n_len, _, t_len, f_len] = x.shape();
        expect_shape("linear cotangent", [n_len, self.out_features, t_len, f_len], dy)?;
        let plane = t_len * f_len;
        let mut dx = x.zeros_like();
        for n in 0..n_len {
            for o in 0..self.out_features {
                let gb = dy.index(n, o, 0, 0);
                let g = &dy.data()[gb..gb + plane];
                self.bias.grad[o] += g.iter().sum::<f64>();
                for c in 0..self.in_features {
                    let wi = o * self.in_features + c;
                    let xb = x.index(n, c, 0, 0);
                    let xs = &x.data()[xb..xb + plane];
                    self.weight.grad[wi] += g.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                    let w = self.weight.value[wi];
                    for (d, gv) in dx.data_mut()[xb..xb + plane].iter_mut().zip(g) {
                        *d += w * gv;
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Mean over `(T, F)`: `(N, C, T, F) -> (N, C, 1, 1)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    input_shape: Option<Shape>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for GlobalAvgPool {
    fn name(&self) -> String {
        "global_avg_pool".into()
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let [n_len, c_len, t_len, f_len] = x.shape();
        let plane = t_len * f_len;
        let data = x
            .data()
            .chunks_exact(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect();
        self.input_shape = Some(x.shape());
        Tensor::new([n_len, c_len, 1, 1], data)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let shape = *cached(&self.input_shape, "global_avg_pool")?;
        let [n_len, c_len, t_len, f_len] = shape;
        expect_shape("global pool cotangent", [n_len, c_len, 1, 1], dy)?;
        let plane = t_len * f_len;
        let mut dx = Tensor::zeros_unchecked(shape);
        for (chunk, &g) in dx.data_mut().chunks_exact_mut(plane).zip(dy.data()) {
            chunk.iter_mut().for_each(|v| *v = g / plane as f64);
        }
        Ok(dx)
    }
}
