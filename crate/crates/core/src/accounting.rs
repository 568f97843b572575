//! Static parameter and FLOP counts computed from a [`ModelConfig`].
//!
//! Nothing here allocates tensors or builds layers; counts are closed-form
//! integer arithmetic over the block shapes.
//!
//! Conventions:
//! * only trainable parameters are counted (batchnorm running statistics are not);
//! * one multiply-accumulate (MAC) is two flops; elementwise adds, pooling
//!   reads and activations are one flop per element; transcendental functions
//!   (sigmoid, exp) are not counted;
//! * time pooling uses floor division so any clip length can be counted;
//! * a GRU layer has `3 * (in * H + H^2 + 2H)` parameters per direction
//!   (input and recurrent bias vectors per gate).

use std::io::Write;

use crate::error::{Error, Result};
use crate::freq::{FacMode, FDY_ATTENTION_WIDTH};
use crate::model::{Activation, LayerKind, ModelConfig};
use crate::tensor::Shape;

pub const FLOP_CONVENTION: &str = "1 MAC = 2 flops";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRow {
    /// Row category, e.g. `conv`, `fac_encoding`, `gru`.
    pub layer: String,
    /// Qualified name, e.g. `block3.conv`.
    pub name: String,
    pub params: u64,
    pub flops: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountReport {
    pub rows: Vec<CountRow>,
    pub convention: &'static str,
    pub input_shape: Shape,
}

impl CountReport {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_flops(&self) -> u64 {
        self.rows.iter().map(|r| r.flops).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn params_where(&self, pred: impl Fn(&CountRow) -> bool) -> u64 {
        self.rows.iter().filter(|r| pred(r)).map(|r| r.params).sum()
    }

    /// `layer,name,params,flops` rows followed by a `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["layer", "name", "params", "flops"])?;
        for r in &self.rows {
            writer.write_record([
                r.layer.as_str(),
                r.name.as_str(),
                &r.params.to_string(),
                &r.flops.to_string(),
            ])?;
        }
        writer.write_record([
            "total",
            "total",
            &self.total_params().to_string(),
            &self.total_flops().to_string(),
        ])?;
        writer.flush()?;
        Ok(())
    }
}

struct Rows {
    rows: Vec<CountRow>,
}

impl Rows {
    fn push(&mut self, layer: &str, name: String, params: u64, macs: u64, other_flops: u64) {
        self.rows.push(CountRow {
            layer: layer.to_string(),
            name,
            params,
            flops: 2 * macs + other_flops,
            macs,
        });
    }
}

/// Parameter (and flop) counts at the config's own input shape, batch 1.
pub fn count_params(config: &ModelConfig) -> Result<CountReport> {
    config.validate()?;
    let (c, t, f) = config.input_shape;
    count_flops(config, [1, c, t, f])
}

/// Counts for an explicit `(N, C, T, F)` input.
pub fn count_flops(config: &ModelConfig, input_shape: Shape) -> Result<CountReport> {
    let [batch, c0, t0, f0] = input_shape;
    if input_shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape {
            shape: input_shape.to_vec(),
            reason: "every dimension must be at least 1".into(),
        });
    }
    if c0 != config.input_shape.0 {
        return Err(Error::mismatch("input channels", config.input_shape.0, c0));
    }
    let n = batch as u64;
    let mut out = Rows { rows: Vec::new() };
    let (mut c_in, mut t, mut f) = (c0 as u64, t0 as u64, f0 as u64);
    for (i, block) in config.blocks.iter().enumerate() {
        let b = i + 1;
        let c_out = block.out_channels as u64;
        let (kt, kf) = (block.kernel.0 as u64, block.kernel.1 as u64);
        let bias = u64::from(block.bias);
        let plane = t * f;
        let conv_params = kt * kf * c_in * c_out + bias * c_out;
        let conv_macs = n * kt * kf * c_in * c_out * plane;
        match block.layer_kind {
            LayerKind::Vanilla => out.push("conv", format!("block{b}.conv"), conv_params, conv_macs, 0),
            LayerKind::Fac => {
                out.push("conv", format!("block{b}.conv"), conv_params, conv_macs, 0);
                let elems = n * c_in * plane;
                match block.fac_mode {
                    FacMode::Fixed => {
                        out.push("fac_encoding", format!("block{b}.fac.p_freq"), f, 0, elems);
                    }
                    FacMode::Adapt => {
                        out.push("fac_encoding", format!("block{b}.fac.p_freq"), f, elems, 0);
                        // time pool, channel average, F -> 1 map
                        out.push(
                            "fac_attention",
                            format!("block{b}.fac.attention"),
                            f + 1,
                            n * f,
                            elems + n * c_in * f,
                        );
                    }
                    FacMode::AdaptDep => {
                        out.push("fac_encoding", format!("block{b}.fac.p_freq"), f, elems, 0);
                        out.push(
                            "fac_attention",
                            format!("block{b}.fac.attention"),
                            f + 1,
                            n * c_in * f,
                            elems,
                        );
                    }
                }
            }
            LayerKind::Fdy => {
                let k = block.fdy_basis as u64;
                out.push("fdy_basis", format!("block{b}.fdy.basis"), k * conv_params, k * conv_macs, 0);
                out.push("fdy_mix", format!("block{b}.fdy.mix"), 0, n * k * c_out * plane, 0);
                let w = FDY_ATTENTION_WIDTH as u64;
                out.push(
                    "fdy_attention",
                    format!("block{b}.fdy.attention"),
                    k * c_in * w + k,
                    n * k * c_in * w * f,
                    n * c_in * plane,
                );
            }
            LayerKind::Faconcat => {
                let params = kt * kf * (c_in + 1) * c_out + bias * c_out;
                out.push("conv", format!("block{b}.conv"), params, n * kt * kf * (c_in + 1) * c_out * plane, 0);
            }
        }
        let out_elems = n * c_out * plane;
        if block.batchnorm {
            out.push("batchnorm", format!("block{b}.bn"), 2 * c_out, out_elems, 0);
        }
        match block.activation {
            Activation::Relu => out.push("relu", format!("block{b}.relu"), 0, 0, out_elems),
            Activation::ContextGating => out.push(
                "context_gating",
                format!("block{b}.gate"),
                c_out * c_out + c_out,
                n * c_out * c_out * plane,
                2 * out_elems,
            ),
        }
        out.push("pool", format!("block{b}.pool"), 0, 0, out_elems);
        c_in = c_out;
        t /= block.pool.window.0 as u64;
        f /= block.pool.window.1 as u64;
    }
    if let Some(rnn) = config.rnn {
        let dirs: u64 = if rnn.bidirectional { 2 } else { 1 };
        let h = rnn.hidden as u64;
        let mut input = c_in * f;
        for l in 0..rnn.layers {
            let params = dirs * 3 * (input * h + h * h + 2 * h);
            let macs = n * t * dirs * 3 * (input * h + h * h);
            out.push("gru", format!("rnn.layer{}", l + 1), params, macs, 0);
            input = dirs * h;
        }
    }
    if let Some(head) = config.head {
        let k = head.n_classes as u64;
        out.push("global_pool", "head.pool".into(), 0, 0, n * c_in * t * f);
        out.push("linear", "head.linear".into(), c_in * k + k, n * c_in * k, 0);
    }
    Ok(CountReport {
        rows: out.rows,
        convention: FLOP_CONVENTION,
        input_shape,
    })
}

/// Extra parameters of `config.with_n_fac(n)` over the all-vanilla network.
pub fn fac_param_overhead(config: &ModelConfig, n_fac: usize) -> Result<u64> {
    let with = count_params(&config.with_n_fac(n_fac)?)?.total_params();
    let without = count_params(&config.with_n_fac(0)?)?.total_params();
    Ok(with - without)
}

/// `sum_b (2 F_b + 1)` over the first `n_fac` blocks (F_b in fixed mode).
pub fn fac_overhead_closed_form(config: &ModelConfig, n_fac: usize, mode: FacMode) -> Result<u64> {
    let inputs = config.block_inputs()?;
    if n_fac > inputs.len() {
        return Err(Error::OutOfRange(format!("n_fac = {n_fac} > {} blocks", inputs.len())));
    }
    Ok(inputs[..n_fac]
        .iter()
        .map(|&(_, _, f)| match mode {
            FacMode::Fixed => f as u64,
            _ => 2 * f as u64 + 1,
        })
        .sum())
}

/// Flop difference between the all-FAC and all-vanilla networks at `input_shape`.
pub fn fac_flop_overhead(config: &ModelConfig, input_shape: Shape) -> Result<u64> {
    let n = config.blocks.len();
    let with = count_flops(&config.with_n_fac(n)?, input_shape)?.total_flops();
    let without = count_flops(&config.with_n_fac(0)?, input_shape)?.total_flops();
    Ok(with - without)
}

/// Where the FDY parameter overhead comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FdyOverhead {
    pub basis: usize,
    /// `(K - 1)` extra copies of every block's kernels and biases.
    pub extra_kernels: u64,
    /// Attention maps of all blocks.
    pub attention: u64,
    /// Per block: `(block, extra kernels, attention)`.
    pub per_block: Vec<(usize, u64, u64)>,
}

impl FdyOverhead {
    pub fn total(&self) -> u64 {
        self.extra_kernels + self.attention
    }
}

/// Parameter overhead of replacing every conv with a `basis`-kernel FDY conv.
pub fn fdy_param_overhead(config: &ModelConfig, basis: usize) -> Result<FdyOverhead> {
    let vanilla = count_params(&config.with_layer_kind(LayerKind::Vanilla))?;
    let fdy = count_params(&config.with_layer_kind(LayerKind::Fdy).with_fdy_basis(basis))?;
    let mut per_block = Vec::with_capacity(config.blocks.len());
    for b in 1..=config.blocks.len() {
        let conv = vanilla.params_where(|r| r.name == format!("block{b}.conv"));
        let basis_p = fdy.params_where(|r| r.name == format!("block{b}.fdy.basis"));
        let attn = fdy.params_where(|r| r.name == format!("block{b}.fdy.attention"));
        per_block.push((b, basis_p - conv, attn));
    }
    let overhead = FdyOverhead {
        basis,
        extra_kernels: per_block.iter().map(|p| p.1).sum(),
        attention: per_block.iter().map(|p| p.2).sum(),
        per_block,
    };
    debug_assert_eq!(overhead.total(), fdy.total_params() - vanilla.total_params());
    Ok(overhead)
}
