use serde::{Deserialize, Serialize};

use super::{cached, Layer, Param};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Zero padding on both axes.
    #[default]
    Zero,
    /// Zero padding in time, wrap-around in frequency.
    CircularFrequency,
}

/// Stride-1, same-size 2-D convolution over `(time, frequency)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub padding: PaddingMode,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            padding: PaddingMode::Zero,
            bias: true,
        }
    }

    pub fn with_padding(mut self, padding: PaddingMode) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel.0 * self.kernel.1
    }

    pub fn validate(&self) -> Result<()> {
        let (kt, kf) = self.kernel;
        if kt % 2 == 0 || kf % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel sizes must be odd, got {kt}x{kf}"
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    #[inline]
    fn weight_index(&self, o: usize, c: usize, dt: usize, df: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel.0 + dt) * self.kernel.1 + df
    }
}

/// Padded copy of one `(T, F)` input plane: `(T + kt - 1) x (F + kf - 1)`.
fn pad_plane(x: &Tensor, n: usize, c: usize, spec: &ConvSpec, out: &mut Vec<f64>) {
    let (kt, kf) = spec.kernel;
    let (pt, pf) = (kt / 2, kf / 2);
    let (t_len, f_len) = (x.time(), x.freq());
    let width = f_len + kf - 1;
    out.clear();
    out.resize((t_len + kt - 1) * width, 0.0);
    for t in 0..t_len {
        let src = x.row(n, c, t);
        let dst = &mut out[(t + pt) * width..(t + pt + 1) * width];
        dst[pf..pf + f_len].copy_from_slice(src);
        if spec.padding == PaddingMode::CircularFrequency {
            for p in 0..pf {
                dst[p] = src[(p + f_len * pf - pf) % f_len];
                dst[pf + f_len + p] = src[p % f_len];
            }
        }
    }
}

fn check_input(x: &Tensor, spec: &ConvSpec, weight: &[f64], bias: Option<&[f64]>) -> Result<()> {
    spec.validate()?;
    if x.channels() != spec.in_channels {
        return Err(Error::mismatch(
            "conv2d input channels",
            spec.in_channels,
            x.channels(),
        ));
    }
    if weight.len() != spec.weight_len() {
        return Err(Error::mismatch("conv2d weight length", spec.weight_len(), weight.len()));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(Error::mismatch("conv2d bias length", spec.out_channels, b.len()));
        }
    }
    Ok(())
}

/// Cross-correlation (no kernel flip) with same-size output.
///
/// `weight` is laid out `(out, in, k_t, k_f)`.
pub fn conv2d(x: &Tensor, spec: &ConvSpec, weight: &[f64], bias: Option<&[f64]>) -> Result<Tensor> {
    check_input(x, spec, weight, bias)?;
    let [n_len, _, t_len, f_len] = x.shape();
    let (kt, kf) = spec.kernel;
    let width = f_len + kf - 1;
    let mut out = Tensor::zeros_unchecked([n_len, spec.out_channels, t_len, f_len]);
    let mut plane = Vec::new();
    let plane_out = t_len * f_len;
    for n in 0..n_len {
        for c in 0..spec.in_channels {
            pad_plane(x, n, c, spec, &mut plane);
            for o in 0..spec.out_channels {
                let base = out.index(n, o, 0, 0);
                let dst_plane = &mut out.data_mut()[base..base + plane_out];
                for dt in 0..kt {
                    for df in 0..kf {
                        let w = weight[spec.weight_index(o, c, dt, df)];
                        for t in 0..t_len {
                            let src = &plane[(t + dt) * width + df..(t + dt) * width + df + f_len];
                            let dst = &mut dst_plane[t * f_len..(t + 1) * f_len];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += w * s;
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = bias {
            for (o, &bo) in b.iter().enumerate() {
                let base = out.index(n, o, 0, 0);
                for v in &mut out.data_mut()[base..base + plane_out] {
                    *v += bo;
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`conv2d`]: accumulates into `dweight` / `dbias` and returns `dx`.
pub fn conv2d_backward(
    x: &Tensor,
    spec: &ConvSpec,
    weight: &[f64],
    dy: &Tensor,
    dweight: &mut [f64],
    dbias: Option<&mut [f64]>,
) -> Result<Tensor> {
    check_input(x, spec, weight, None)?;
    let [n_len, _, t_len, f_len] = x.shape();
    if dy.shape() != [n_len, spec.out_channels, t_len, f_len] {
        return Err(Error::mismatch(
            "conv2d cotangent",
            [n_len, spec.out_channels, t_len, f_len],
            dy.shape(),
        ));
    }
    let (kt, kf) = spec.kernel;
    let (pt, pf) = (kt / 2, kf / 2);
    let width = f_len + kf - 1;
    let mut dx = x.zeros_like();
    let mut plane = Vec::new();
    let mut dplane = vec![0.0; (t_len + kt - 1) * width];
    for n in 0..n_len {
        for c in 0..spec.in_channels {
            pad_plane(x, n, c, spec, &mut plane);
            dplane.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..spec.out_channels {
                for dt in 0..kt {
                    for df in 0..kf {
                        let wi = spec.weight_index(o, c, dt, df);
                        let w = weight[wi];
                        let mut gw = 0.0;
                        for t in 0..t_len {
                            let g = dy.row(n, o, t);
                            let off = (t + dt) * width + df;
                            let src = &plane[off..off + f_len];
                            gw += g.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            for (d, gv) in dplane[off..off + f_len].iter_mut().zip(g) {
                                *d += w * gv;
                            }
                        }
                        dweight[wi] += gw;
                    }
                }
            }
            // fold the padded gradient back onto the input plane
            for t in 0..t_len {
                let row = &dplane[(t + pt) * width..(t + pt + 1) * width];
                let base = dx.index(n, c, t, 0);
                let dst = &mut dx.data_mut()[base..base + f_len];
                for (f, d) in dst.iter_mut().enumerate() {
                    *d += row[f + pf];
                }
                if spec.padding == PaddingMode::CircularFrequency {
                    for p in 0..pf {
                        dst[(p + f_len * pf - pf) % f_len] += row[p];
                        dst[p % f_len] += row[pf + f_len + p];
                    }
                }
            }
        }
    }
    if let Some(db) = dbias {
        for n in 0..n_len {
            for (o, d) in db.iter_mut().enumerate() {
                for t in 0..t_len {
                    *d += dy.row(n, o, t).iter().sum::<f64>();
                }
            }
        }
    }
    Ok(dx)
}

/// Convolution layer with Kaiming-uniform weights and zero bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    spec: ConvSpec,
    pub weight: Param,
    pub bias: Option<Param>,
    cache: Option<Tensor>,
}

impl Conv2d {
    pub fn new(spec: ConvSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let fan_in = spec.in_channels * spec.kernel.0 * spec.kernel.1;
        Ok(Self {
            spec,
            weight: Param::kaiming_uniform("weight", spec.weight_len(), fan_in, rng),
            bias: spec.bias.then(|| Param::zeros("bias", spec.out_channels)),
            cache: None,
        })
    }

    pub fn from_weights(spec: ConvSpec, weight: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        if weight.len() != spec.weight_len() {
            return Err(Error::mismatch("conv2d weight length", spec.weight_len(), weight.len()));
        }
        if bias.is_some() != spec.bias {
            return Err(Error::InvalidArgument("bias presence disagrees with spec".into()));
        }
        Ok(Self {
            spec,
            weight: Param::new("weight", weight),
            bias: bias.map(|b| Param::new("bias", b)),
            cache: None,
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }
}

impl Layer for Conv2d {
    fn name(&self) -> String {
        let (kt, kf) = self.spec.kernel;
        format!(
            "conv{kt}x{kf}({}->{}, {:?})",
            self.spec.in_channels, self.spec.out_channels, self.spec.padding
        )
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d(
            x,
            &self.spec,
            &self.weight.value,
            self.bias.as_ref().map(|b| b.value.as_slice()),
        )?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let name = self.name();
        let x = cached(&self.cache, &name)?;
        conv2d_backward(
            x,
            &self.spec,
            &self.weight.value,
            dy,
            &mut self.weight.grad,
            self.bias.as_mut().map(|b| b.grad.as_mut_slice()),
        )
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v
    }
}
