use super::time_mean;
use crate::error::{Error, Result};
use crate::layers::{cached, conv2d, conv2d_backward, ConvSpec, Layer, PaddingMode, Param};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Frequency context of the attention map (bins).
pub const FDY_ATTENTION_WIDTH: usize = 3;

#[derive(Debug, Clone)]
struct FdyCache {
    x: Tensor,
    pooled: Vec<f64>,
    /// `pi[(n * K + k) * F + f]`
    pi: Vec<f64>,
    basis_out: Vec<Tensor>,
}

/// Frequency dynamic convolution.
///
/// Output is `sum_k pi_k(f, x) * (W_k * x + b_k)`. The attention `pi` is a
/// softmax over `K` of a width-3 frequency convolution (channels -> K) applied
/// to the time-averaged input.
#[derive(Debug, Clone)]
pub struct FdyConv {
    spec: ConvSpec,
    basis: usize,
    /// `K` stacked kernels, each `(out, in, k_t, k_f)`.
    pub basis_w: Param,
    pub basis_b: Option<Param>,
    /// `(K, in, 3)`.
    pub attn_w: Param,
    pub attn_b: Param,
    cache: Option<FdyCache>,
}

impl FdyConv {
    pub fn new(spec: ConvSpec, basis: usize, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        if basis == 0 {
            return Err(Error::InvalidArgument("FDY needs at least one basis kernel".into()));
        }
        let fan_in = spec.in_channels * spec.kernel.0 * spec.kernel.1;
        let attn_len = basis * spec.in_channels * FDY_ATTENTION_WIDTH;
        Ok(Self {
            spec,
            basis,
            basis_w: Param::kaiming_uniform("basis_w", basis * spec.weight_len(), fan_in, rng),
            basis_b: spec.bias.then(|| Param::zeros("basis_b", basis * spec.out_channels)),
            attn_w: Param::kaiming_uniform(
                "attn_w",
                attn_len,
                spec.in_channels * FDY_ATTENTION_WIDTH,
                rng,
            ),
            attn_b: Param::zeros("attn_b", basis),
            cache: None,
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn basis(&self) -> usize {
        self.basis
    }

    pub fn basis_weight(&self, k: usize) -> &[f64] {
        let len = self.spec.weight_len();
        &self.basis_w.value[k * len..(k + 1) * len]
    }

    pub fn basis_bias(&self, k: usize) -> Option<&[f64]> {
        let o = self.spec.out_channels;
        self.basis_b.as_ref().map(|b| &b.value[k * o..(k + 1) * o])
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.spec.in_channels {
            return Err(Error::mismatch("fdy input channels", self.spec.in_channels, x.channels()));
        }
        Ok(())
    }

    #[inline]
    fn context_bin(&self, f: usize, d: usize, f_len: usize) -> Option<usize> {
        let pos = f as isize + d as isize - (FDY_ATTENTION_WIDTH / 2) as isize;
        match self.spec.padding {
            PaddingMode::CircularFrequency => Some(pos.rem_euclid(f_len as isize) as usize),
            PaddingMode::Zero => (0..f_len as isize).contains(&pos).then_some(pos as usize),
        }
    }

    fn attention_from_pooled(&self, pooled: &[f64], n_len: usize, f_len: usize) -> Vec<f64> {
        let (c_len, k_len) = (self.spec.in_channels, self.basis);
        let mut pi = vec![0.0; n_len * k_len * f_len];
        let mut logits = vec![0.0; k_len];
        for n in 0..n_len {
            for f in 0..f_len {
                for (k, l) in logits.iter_mut().enumerate() {
                    let mut acc = self.attn_b.value[k];
                    for c in 0..c_len {
                        for d in 0..FDY_ATTENTION_WIDTH {
                            if let Some(fi) = self.context_bin(f, d, f_len) {
                                acc += self.attn_w.value[(k * c_len + c) * FDY_ATTENTION_WIDTH + d]
                                    * pooled[(n * c_len + c) * f_len + fi];
                            }
                        }
                    }
                    *l = acc;
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                for k in 0..k_len {
                    pi[(n * k_len + k) * f_len + f] = (logits[k] - max).exp() / z;
                }
            }
        }
        pi
    }

    /// Attention weights `pi[(n * K + k) * F + f]`.
    pub fn attention(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.attention_from_pooled(&time_mean(x), x.batch(), x.freq()))
    }

    /// Forward through the combined-kernel route: for every frequency bin the
    /// basis kernels are first mixed by `pi` and the mixed kernel is applied.
    pub fn forward_combined(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let [n_len, c_len, t_len, f_len] = x.shape();
        let pi = self.attention(x)?;
        let (kt, kf) = self.spec.kernel;
        let (pt, pf) = ((kt / 2) as isize, (kf / 2) as isize);
        let (o_len, k_len) = (self.spec.out_channels, self.basis);
        let wlen = self.spec.weight_len();
        let mut out = Tensor::zeros([n_len, o_len, t_len, f_len])?;
        let mut kernel = vec![0.0; wlen];
        let mut bias = vec![0.0; o_len];
        for n in 0..n_len {
            for f in 0..f_len {
                kernel.iter_mut().for_each(|v| *v = 0.0);
                bias.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..k_len {
                    let p = pi[(n * k_len + k) * f_len + f];
                    for (m, w) in kernel.iter_mut().zip(self.basis_weight(k)) {
                        *m += p * w;
                    }
                    if let Some(b) = self.basis_bias(k) {
                        for (m, bk) in bias.iter_mut().zip(b) {
                            *m += p * bk;
                        }
                    }
                }
                for o in 0..o_len {
                    for t in 0..t_len {
                        let mut acc = bias[o];
                        for c in 0..c_len {
                            for dt in 0..kt {
                                let ti = t as isize + dt as isize - pt;
                                if ti < 0 || ti >= t_len as isize {
                                    continue;
                                }
                                for df in 0..kf {
                                    let mut fi = f as isize + df as isize - pf;
                                    match self.spec.padding {
                                        PaddingMode::CircularFrequency => {
                                            fi = fi.rem_euclid(f_len as isize)
                                        }
                                        PaddingMode::Zero => {
                                            if fi < 0 || fi >= f_len as isize {
                                                continue;
                                            }
                                        }
                                    }
                                    acc += kernel[((o * c_len + c) * kt + dt) * kf + df]
                                        * x.get(n, c, ti as usize, fi as usize);
                                }
                            }
                        }
                        out.set(n, o, t, f, acc);
                    }
                }
            }
        }
        Ok(out)
    }
}

impl Layer for FdyConv {
    fn name(&self) -> String {
        format!(
            "fdy(K={}, {}->{}, {:?})",
            self.basis, self.spec.in_channels, self.spec.out_channels, self.spec.padding
        )
    }

    /// Weighted-output route: each basis convolution is evaluated and the
    /// outputs are mixed by `pi`.
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let [n_len, _, t_len, f_len] = x.shape();
        let pooled = time_mean(x);
        let pi = self.attention_from_pooled(&pooled, n_len, f_len);
        let basis_out = (0..self.basis)
            .map(|k| conv2d(x, &self.spec, self.basis_weight(k), self.basis_bias(k)))
            .collect::<Result<Vec<_>>>()?;
        let o_len = self.spec.out_channels;
        let mut y = Tensor::zeros([n_len, o_len, t_len, f_len])?;
        for n in 0..n_len {
            for (k, yk) in basis_out.iter().enumerate() {
                let p = &pi[(n * self.basis + k) * f_len..(n * self.basis + k + 1) * f_len];
                for o in 0..o_len {
                    for t in 0..t_len {
                        let base = y.index(n, o, t, 0);
                        let src = yk.row(n, o, t);
                        for ((d, s), w) in y.data_mut()[base..base + f_len].iter_mut().zip(src).zip(p) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        self.cache = Some(FdyCache {
            x: x.clone(),
            pooled,
            pi,
            basis_out,
        });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let cache = cached(&self.cache, &name)?.clone();
        let x = &cache.x;
        let [n_len, c_len, t_len, f_len] = x.shape();
        let (o_len, k_len) = (self.spec.out_channels, self.basis);
        if dy.shape() != [n_len, o_len, t_len, f_len] {
            return Err(Error::mismatch("fdy cotangent", [n_len, o_len, t_len, f_len], dy.shape()));
        }
        let wlen = self.spec.weight_len();
        let mut dx = x.zeros_like();
        let mut dpi = vec![0.0; n_len * k_len * f_len];
        for k in 0..k_len {
            // cotangent of the k-th basis output, and dL/dpi_k
            let mut dyk = dy.clone();
            for n in 0..n_len {
                let p = &cache.pi[(n * k_len + k) * f_len..(n * k_len + k + 1) * f_len];
                let dp = &mut dpi[(n * k_len + k) * f_len..(n * k_len + k + 1) * f_len];
                for o in 0..o_len {
                    for t in 0..t_len {
                        let yk = cache.basis_out[k].row(n, o, t);
                        let base = dyk.index(n, o, t, 0);
                        for (f, g) in dyk.data_mut()[base..base + f_len].iter_mut().enumerate() {
                            dp[f] += *g * yk[f];
                            *g *= p[f];
                        }
                    }
                }
            }
            let (weight, dweight) = (
                &self.basis_w.value[k * wlen..(k + 1) * wlen],
                &mut self.basis_w.grad[k * wlen..(k + 1) * wlen],
            );
            let dbias = self
                .basis_b
                .as_mut()
                .map(|b| &mut b.grad[k * o_len..(k + 1) * o_len]);
            let dxk = conv2d_backward(x, &self.spec, weight, &dyk, dweight, dbias)?;
            dx.add_assign(&dxk)?;
        }

        // softmax backward, then the width-3 attention map
        let mut dpooled = vec![0.0; n_len * c_len * f_len];
        for n in 0..n_len {
            for f in 0..f_len {
                let mean: f64 = (0..k_len)
                    .map(|k| {
                        let i = (n * k_len + k) * f_len + f;
                        cache.pi[i] * dpi[i]
                    })
                    .sum();
                for k in 0..k_len {
                    let i = (n * k_len + k) * f_len + f;
                    let dlogit = cache.pi[i] * (dpi[i] - mean);
                    self.attn_b.grad[k] += dlogit;
                    for c in 0..c_len {
                        for d in 0..FDY_ATTENTION_WIDTH {
                            if let Some(fi) = self.context_bin(f, d, f_len) {
                                let wi = (k * c_len + c) * FDY_ATTENTION_WIDTH + d;
                                let pi_idx = (n * c_len + c) * f_len + fi;
                                self.attn_w.grad[wi] += dlogit * cache.pooled[pi_idx];
                                dpooled[pi_idx] += dlogit * self.attn_w.value[wi];
                            }
                        }
                    }
                }
            }
        }
        for n in 0..n_len {
            for c in 0..c_len {
                let g = &dpooled[(n * c_len + c) * f_len..(n * c_len + c + 1) * f_len];
                for t in 0..t_len {
                    let base = dx.index(n, c, t, 0);
                    for (d, gv) in dx.data_mut()[base..base + f_len].iter_mut().zip(g) {
                        *d += gv / t_len as f64;
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.basis_w];
        v.extend(self.basis_b.as_ref());
        v.push(&self.attn_w);
        v.push(&self.attn_b);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.basis_w];
        v.extend(self.basis_b.as_mut());
        v.push(&mut self.attn_w);
        v.push(&mut self.attn_b);
        v
    }
}
