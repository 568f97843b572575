use serde::{Deserialize, Serialize};

use super::time_mean;
use crate::error::{Error, Result};
use crate::layers::{cached, sigmoid, Conv2d, ConvSpec, Layer, Param};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// How the encoding amplitude `alpha` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacMode {
    /// `alpha = 1`; no attention parameters.
    Fixed,
    /// One `alpha` per clip, computed from the channel-averaged spectrum.
    Adapt,
    /// One `alpha` per clip and channel.
    #[default]
    AdaptDep,
}

impl FacMode {
    pub const ALL: [FacMode; 3] = [FacMode::Fixed, FacMode::Adapt, FacMode::AdaptDep];

    pub fn as_str(&self) -> &'static str {
        match self {
            FacMode::Fixed => "fixed",
            FacMode::Adapt => "adapt",
            FacMode::AdaptDep => "adapt_dep",
        }
    }

    pub fn has_attention(&self) -> bool {
        !matches!(self, FacMode::Fixed)
    }
}

impl std::fmt::Display for FacMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FacMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(FacMode::Fixed),
            "adapt" => Ok(FacMode::Adapt),
            "adapt_dep" | "adapt&dep" => Ok(FacMode::AdaptDep),
            other => Err(Error::InvalidArgument(format!("unknown FAC mode '{other}'"))),
        }
    }
}

/// Initial encoding `sin(pi/2 * f / F)` for `f = 0..F`.
pub fn fac_encoding_init(freq: usize) -> Result<Vec<f64>> {
    if freq == 0 {
        return Err(Error::InvalidArgument("encoding length must be >= 1".into()));
    }
    Ok((0..freq)
        .map(|f| (std::f64::consts::FRAC_PI_2 * f as f64 / freq as f64).sin())
        .collect())
}

#[derive(Debug, Clone)]
struct FacCache {
    /// Time-averaged input `(N * C, F)`, or channel-averaged `(N, F)` in adapt mode.
    pooled: Vec<f64>,
    /// Per `(n, c)` amplitude.
    alpha: Vec<f64>,
    shape: crate::tensor::Shape,
}

/// Frequency-aware convolution.
///
/// The input is shifted by `alpha(n, c) * p_freq(f)` (broadcast over time)
/// and then convolved. `alpha = sigmoid(<attn_w, mean_t x> + attn_b)`, where
/// `attn_w` has one weight per frequency bin shared across channels.
#[derive(Debug, Clone)]
pub struct FacConv {
    mode: FacMode,
    freq: usize,
    pub p_freq: Param,
    pub attn_w: Param,
    pub attn_b: Param,
    pub conv: Conv2d,
    cache: Option<FacCache>,
}

impl FacConv {
    pub fn new(spec: ConvSpec, freq: usize, mode: FacMode, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            mode,
            freq,
            p_freq: Param::new("p_freq", fac_encoding_init(freq)?),
            attn_w: Param::zeros("attn_w", freq),
            attn_b: Param::zeros("attn_b", 1),
            conv: Conv2d::new(spec, rng)?,
            cache: None,
        })
    }

    pub fn mode(&self) -> FacMode {
        self.mode
    }

    pub fn freq(&self) -> usize {
        self.freq
    }

    pub fn encoding(&self) -> &[f64] {
        &self.p_freq.value
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.freq() != self.freq {
            return Err(Error::mismatch("fac frequency bins", self.freq, x.freq()));
        }
        if x.channels() != self.conv.spec().in_channels {
            return Err(Error::mismatch(
                "fac input channels",
                self.conv.spec().in_channels,
                x.channels(),
            ));
        }
        Ok(())
    }

    fn pooled_and_alpha(&self, x: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let [n_len, c_len, _, f_len] = x.shape();
        let w = &self.attn_w.value;
        let b = self.attn_b.value[0];
        match self.mode {
            FacMode::Fixed => (Vec::new(), vec![1.0; n_len * c_len]),
            FacMode::AdaptDep => {
                let pooled = time_mean(x);
                let alpha = pooled
                    .chunks_exact(f_len)
                    .map(|row| sigmoid(row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b))
                    .collect();
                (pooled, alpha)
            }
            FacMode::Adapt => {
                let per_channel = time_mean(x);
                let mut pooled = vec![0.0; n_len * f_len];
                for n in 0..n_len {
                    let dst = &mut pooled[n * f_len..(n + 1) * f_len];
                    for c in 0..c_len {
                        let src = &per_channel[(n * c_len + c) * f_len..(n * c_len + c + 1) * f_len];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    dst.iter_mut().for_each(|v| *v /= c_len as f64);
                }
                let mut alpha = Vec::with_capacity(n_len * c_len);
                for row in pooled.chunks_exact(f_len) {
                    let a = sigmoid(row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b);
                    alpha.extend(std::iter::repeat(a).take(c_len));
                }
                (pooled, alpha)
            }
        }
    }

    /// Encoding amplitude per `(n, c)`, flattened row-major.
    pub fn alpha(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.pooled_and_alpha(x).1)
    }

    /// The modified input `x + alpha * p_freq` that the inner convolution sees.
    pub fn inject(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let alpha = self.pooled_and_alpha(x).1;
        Ok(self.inject_with(x, &alpha))
    }

    fn inject_with(&self, x: &Tensor, alpha: &[f64]) -> Tensor {
        let [n_len, c_len, t_len, _] = x.shape();
        let mut out = x.clone();
        for n in 0..n_len {
            for c in 0..c_len {
                let a = alpha[n * c_len + c];
                for t in 0..t_len {
                    let base = out.index(n, c, t, 0);
                    for (v, p) in out.data_mut()[base..base + self.freq]
                        .iter_mut()
                        .zip(&self.p_freq.value)
                    {
                        *v += a * p;
                    }
                }
            }
        }
        out
    }
}

impl Layer for FacConv {
    fn name(&self) -> String {
        format!("fac({}, F={}, {})", self.mode, self.freq, self.conv.name())
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let (pooled, alpha) = self.pooled_and_alpha(x);
        let injected = self.inject_with(x, &alpha);
        let y = self.conv.forward(&injected)?;
        self.cache = Some(FacCache {
            pooled,
            alpha,
            shape: x.shape(),
        });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let cache = cached(&self.cache, &name)?;
        let [n_len, c_len, t_len, f_len] = cache.shape;
        let mut dx = self.conv.backward(dy)?;

        // dL/dalpha(n, c) and dL/dp_freq
        let mut dalpha = vec![0.0; n_len * c_len];
        for n in 0..n_len {
            for c in 0..c_len {
                let a = cache.alpha[n * c_len + c];
                let mut g = 0.0;
                for t in 0..t_len {
                    let row = dx.row(n, c, t);
                    for ((dp, p), d) in self.p_freq.grad.iter_mut().zip(&self.p_freq.value).zip(row) {
                        *dp += a * d;
                        g += p * d;
                    }
                }
                dalpha[n * c_len + c] = g;
            }
        }

        let w = self.attn_w.value.clone();
        match self.mode {
            FacMode::Fixed => {}
            FacMode::AdaptDep => {
                for n in 0..n_len {
                    for c in 0..c_len {
                        let i = n * c_len + c;
                        let a = cache.alpha[i];
                        let dz = dalpha[i] * a * (1.0 - a);
                        let pooled = &cache.pooled[i * f_len..(i + 1) * f_len];
                        for (gw, p) in self.attn_w.grad.iter_mut().zip(pooled) {
                            *gw += dz * p;
                        }
                        self.attn_b.grad[0] += dz;
                        let scale = dz / t_len as f64;
                        for t in 0..t_len {
                            let base = dx.index(n, c, t, 0);
                            for (d, wf) in dx.data_mut()[base..base + f_len].iter_mut().zip(&w) {
                                *d += scale * wf;
                            }
                        }
                    }
                }
            }
            FacMode::Adapt => {
                for n in 0..n_len {
                    let a = cache.alpha[n * c_len];
                    let g: f64 = dalpha[n * c_len..(n + 1) * c_len].iter().sum();
                    let dz = g * a * (1.0 - a);
                    let pooled = &cache.pooled[n * f_len..(n + 1) * f_len];
                    for (gw, p) in self.attn_w.grad.iter_mut().zip(pooled) {
                        *gw += dz * p;
                    }
                    self.attn_b.grad[0] += dz;
                    let scale = dz / (t_len * c_len) as f64;
                    for c in 0..c_len {
                        for t in 0..t_len {
                            let base = dx.index(n, c, t, 0);
                            for (d, wf) in dx.data_mut()[base..base + f_len].iter_mut().zip(&w) {
                                *d += scale * wf;
                            }
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.p_freq];
        if self.mode.has_attention() {
            v.push(&self.attn_w);
            v.push(&self.attn_b);
        }
        v.extend(self.conv.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.p_freq];
        if self.mode.has_attention() {
            v.push(&mut self.attn_w);
            v.push(&mut self.attn_b);
        }
        v.extend(self.conv.params_mut());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use crate::layers::{conv2d, PaddingMode};

    fn random_fac(mode: FacMode, c_in: usize, c_out: usize, freq: usize, rng: &mut Rng) -> FacConv {
        let spec = ConvSpec::new(c_in, c_out, (3, 3)).with_padding(PaddingMode::CircularFrequency);
        let mut fac = FacConv::new(spec, freq, mode, rng).unwrap();
        fac.attn_w.value = (0..freq).map(|_| rng.uniform(-1.0, 1.0)).collect();
        fac.attn_b.value = vec![rng.uniform(-0.5, 0.5)];
        fac.conv.bias.as_mut().unwrap().value = (0..c_out).map(|_| rng.uniform(-0.2, 0.2)).collect();
        fac
    }

    #[test]
    fn encoding_values() {
        let e = fac_encoding_init(128).unwrap();
        assert_eq!(e[0], 0.0);
        assert!((e[64] - 0.7071068).abs() < 1e-7);
        let e4 = fac_encoding_init(4).unwrap();
        for (v, expected) in e4.iter().zip([0.0, 0.3826834, 0.7071068, 0.9238795]) {
            assert!((v - expected).abs() < 1e-7);
        }
        assert!(fac_encoding_init(0).is_err());
    }

    #[test]
    fn alpha_examples() {
        let mut rng = Rng::new(0);
        let spec = ConvSpec::new(3, 2, (3, 3));
        let fac = FacConv::new(spec, 4, FacMode::AdaptDep, &mut rng).unwrap();
        let zero = Tensor::zeros([2, 3, 5, 4]).unwrap();
        assert!(fac.alpha(&zero).unwrap().iter().all(|&a| a == 0.5));

        let fixed = FacConv::new(spec, 4, FacMode::Fixed, &mut rng).unwrap();
        let x = Tensor::rand_uniform([2, 3, 5, 4], -3.0, 3.0, &mut rng).unwrap();
        assert!(fixed.alpha(&x).unwrap().iter().all(|&a| a == 1.0));

        let mut alt = FacConv::new(ConvSpec::new(1, 1, (3, 3)), 4, FacMode::AdaptDep, &mut rng).unwrap();
        alt.attn_w.value = vec![1.0, -1.0, 1.0, -1.0];
        let ones = Tensor::fill([1, 1, 3, 4], 1.0).unwrap();
        assert_eq!(alt.alpha(&ones).unwrap(), vec![0.5]);

        let wrong = Tensor::zeros([1, 3, 5, 5]).unwrap();
        assert!(fac.alpha(&wrong).is_err());
    }

    #[test]
    fn alpha_is_in_open_unit_interval() {
        let mut rng = Rng::new(31);
        for mode in [FacMode::Adapt, FacMode::AdaptDep] {
            let fac = random_fac(mode, 3, 2, 6, &mut rng);
            let x = Tensor::rand_uniform([3, 3, 4, 6], -2.0, 2.0, &mut rng).unwrap();
            assert!(fac.alpha(&x).unwrap().iter().all(|&a| a > 0.0 && a < 1.0));
        }
    }

    #[test]
    fn saturated_attention_degenerates_to_plain_convolution() {
        let mut rng = Rng::new(2);
        let mut fac = random_fac(FacMode::AdaptDep, 2, 3, 8, &mut rng);
        fac.attn_b.value = vec![-1e6];
        let x = Tensor::rand_uniform([2, 2, 4, 8], -1.0, 1.0, &mut rng).unwrap();
        let y = fac.forward(&x).unwrap();
        let conv = fac.conv.spec();
        let plain = conv2d(
            &x,
            conv,
            &fac.conv.weight.value,
            fac.conv.bias.as_ref().map(|b| b.value.as_slice()),
        )
        .unwrap();
        assert!(y.max_abs_diff(&plain).unwrap() <= 1e-9);
    }

    #[test]
    fn zero_encoding_is_plain_convolution() {
        let mut rng = Rng::new(3);
        let mut fac = random_fac(FacMode::Fixed, 2, 2, 8, &mut rng);
        fac.p_freq.value = vec![0.0; 8];
        let x = Tensor::rand_uniform([1, 2, 3, 8], -1.0, 1.0, &mut rng).unwrap();
        let y = fac.forward(&x).unwrap();
        let plain = fac.conv.forward(&x).unwrap();
        assert_eq!(y, plain);
    }

    #[test]
    fn zero_input_with_identity_kernel_returns_encoding() {
        let mut rng = Rng::new(4);
        let spec = ConvSpec::new(1, 1, (1, 1)).with_bias(false);
        let mut fac = FacConv::new(spec, 16, FacMode::Fixed, &mut rng).unwrap();
        fac.conv.weight.value = vec![1.0];
        let y = fac.forward(&Tensor::zeros([1, 1, 6, 16]).unwrap()).unwrap();
        let enc = fac_encoding_init(16).unwrap();
        for t in 0..6 {
            assert_eq!(y.row(0, 0, t), enc.as_slice());
        }
    }

    #[test]
    fn frequency_shift_changes_output() {
        let mut rng = Rng::new(5);
        for mode in FacMode::ALL {
            let mut fac = random_fac(mode, 2, 2, 8, &mut rng);
            let x = Tensor::rand_uniform([1, 2, 4, 8], -1.0, 1.0, &mut rng).unwrap();
            let shifted_in = fac.forward(&x.roll_freq(1)).unwrap();
            let shifted_out = fac.forward(&x).unwrap().roll_freq(1);
            let diff = shifted_in.add(&shifted_out.scale(-1.0)).unwrap().norm();
            assert!(diff > 1e-6, "{mode}: {diff}");
        }
    }

    #[test]
    fn modes_reduce_to_each_other() {
        let mut rng = Rng::new(6);
        let dep = random_fac(FacMode::AdaptDep, 3, 2, 8, &mut rng);
        let mut adapt = dep.clone();
        adapt.mode = FacMode::Adapt;
        let x = Tensor::rand_uniform([2, 3, 4, 8], -1.0, 1.0, &mut rng).unwrap();

        // adapt == adapt_dep evaluated on the channel-averaged input
        let mut averaged = x.clone();
        for n in 0..2 {
            for t in 0..4 {
                for f in 0..8 {
                    let m = (0..3).map(|c| x.get(n, c, t, f)).sum::<f64>() / 3.0;
                    for c in 0..3 {
                        averaged.set(n, c, t, f, m);
                    }
                }
            }
        }
        let a_adapt = adapt.alpha(&x).unwrap();
        let a_dep = dep.alpha(&averaged).unwrap();
        for (a, b) in a_adapt.iter().zip(&a_dep) {
            assert!((a - b).abs() <= 1e-12);
        }

        // fixed == adapt_dep with alpha saturated at 1
        let mut saturated = dep.clone();
        saturated.attn_b.value = vec![1e6];
        let mut fixed = dep.clone();
        fixed.mode = FacMode::Fixed;
        let ys = saturated.forward(&x).unwrap();
        let yf = fixed.forward(&x).unwrap();
        assert!(ys.max_abs_diff(&yf).unwrap() <= 1e-12);
    }

    #[test]
    fn fixed_mode_exposes_only_the_encoding() {
        let mut rng = Rng::new(7);
        let spec = ConvSpec::new(2, 2, (3, 3));
        let fixed = FacConv::new(spec, 16, FacMode::Fixed, &mut rng).unwrap();
        let dep = FacConv::new(spec, 16, FacMode::AdaptDep, &mut rng).unwrap();
        let conv = fixed.conv.param_count();
        assert_eq!(fixed.param_count() - conv, 16);
        assert_eq!(dep.param_count() - conv, 33);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(8);
        for mode in FacMode::ALL {
            let mut fac = random_fac(mode, 3, 2, 16, &mut rng);
            let x = Tensor::rand_uniform([1, 3, 6, 16], -1.0, 1.0, &mut rng).unwrap();
            let report = grad_check(&mut fac, &x, 1e-5, 1e-4, &mut rng).unwrap();
            assert!(report.passed, "{mode}: {report:?}");
            assert_eq!(report.param_errors.len(), if mode == FacMode::Fixed { 3 } else { 5 });
        }
    }
}
