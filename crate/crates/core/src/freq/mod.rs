//! Convolutions that see absolute frequency position.
//!
//! * [`FacConv`]: adds a learnable, attention-scaled frequency encoding to the
//!   input before an ordinary convolution.
//! * [`FdyConv`]: mixes `K` basis kernels with per-frequency attention weights.
//! * [`FaConcatConv`]: concatenates a constant frequency ramp as an extra input
//!   channel.

mod faconcat;
mod fac;
mod fdy;

pub use fac::{fac_encoding_init, FacConv, FacMode};
pub use faconcat::{frequency_ramp, FaConcatConv};
pub use fdy::{FdyConv, FDY_ATTENTION_WIDTH};

use crate::tensor::Tensor;

/// Time average: `(N, C, T, F) -> [n][c][f]` flattened as `(N * C, F)`.
pub(crate) fn time_mean(x: &Tensor) -> Vec<f64> {
    let [n_len, c_len, t_len, f_len] = x.shape();
    let mut out = vec![0.0; n_len * c_len * f_len];
    for n in 0..n_len {
        for c in 0..c_len {
            let dst = &mut out[(n * c_len + c) * f_len..(n * c_len + c + 1) * f_len];
            for t in 0..t_len {
                for (d, v) in dst.iter_mut().zip(x.row(n, c, t)) {
                    *d += v;
                }
            }
            dst.iter_mut().for_each(|v| *v /= t_len as f64);
        }
    }
    out
}
