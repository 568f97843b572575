use super::{cached, expect_shape, Layer, Param};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalisation over `(N, T, F)`.
///
/// Training mode normalises with batch statistics and updates the running
/// estimates (`running = (1 - m) * running + m * batch`, unbiased variance);
/// inference mode uses the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    training: bool,
    cache: Option<Cache>,
}

#[derive(Debug, Clone)]
struct Cache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new("gamma", vec![1.0; channels]),
            beta: Param::zeros("beta", channels),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            training: true,
            cache: None,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }
}

impl Layer for BatchNorm {
    fn name(&self) -> String {
        format!("batchnorm({})", self.channels)
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.channels() != self.channels {
            return Err(Error::mismatch("batchnorm channels", self.channels, x.channels()));
        }
        let [n_len, c_len, t_len, f_len] = x.shape();
        let plane = t_len * f_len;
        let count = (n_len * plane) as f64;
        let mut x_hat = x.zeros_like();
        let mut y = x.zeros_like();
        let mut inv_std = vec![0.0; c_len];
        for c in 0..c_len {
            let (mean, var) = if self.training {
                let mut sum = 0.0;
                for n in 0..n_len {
                    let b = x.index(n, c, 0, 0);
                    sum += x.data()[b..b + plane].iter().sum::<f64>();
                }
                let mean = sum / count;
                let mut sq = 0.0;
                for n in 0..n_len {
                    let b = x.index(n, c, 0, 0);
                    sq += x.data()[b..b + plane]
                        .iter()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>();
                }
                let var = sq / count;
                let unbiased = if count > 1.0 { sq / (count - 1.0) } else { var };
                self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * mean;
                self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * unbiased;
                (mean, var)
            } else {
                (self.running_mean[c], self.running_var[c])
            };
            let is = 1.0 / (var + BN_EPS).sqrt();
            inv_std[c] = is;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            for n in 0..n_len {
                let base = x.index(n, c, 0, 0);
                for i in base..base + plane {
                    let h = (x.data()[i] - mean) * is;
                    x_hat.data_mut()[i] = h;
                    y.data_mut()[i] = g * h + b;
                }
            }
        }
        self.cache = Some(Cache {
            x_hat,
            inv_std,
            batch_stats: self.training,
        });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let cache = cached(&self.cache, &name)?;
        expect_shape("batchnorm cotangent", cache.x_hat.shape(), dy)?;
        let [n_len, c_len, t_len, f_len] = dy.shape();
        let plane = t_len * f_len;
        let count = (n_len * plane) as f64;
        let mut dx = dy.zeros_like();
        for c in 0..c_len {
            let mut sum_g = 0.0;
            let mut sum_gh = 0.0;
            for n in 0..n_len {
                let base = dy.index(n, c, 0, 0);
                for i in base..base + plane {
                    sum_g += dy.data()[i];
                    sum_gh += dy.data()[i] * cache.x_hat.data()[i];
                }
            }
            self.beta.grad[c] += sum_g;
            self.gamma.grad[c] += sum_gh;
            let scale = self.gamma.value[c] * cache.inv_std[c];
            for n in 0..n_len {
                let base = dy.index(n, c, 0, 0);
                for i in base..base + plane {
                    dx.data_mut()[i] = if cache.batch_stats {
                        scale * (dy.data()[i] - sum_g / count - cache.x_hat.data()[i] * sum_gh / count)
                    } else {
                        scale * dy.data()[i]
                    };
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
