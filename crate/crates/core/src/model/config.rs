use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::FacMode;
use crate::layers::{PaddingMode, PoolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Vanilla,
    Fac,
    Fdy,
    Faconcat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    ContextGating,
}

fn default_kernel() -> (usize, usize) {
    (3, 3)
}

fn default_true() -> bool {
    true
}

fn default_basis() -> usize {
    4
}

/// One convolutional block: conv-like layer, optional batchnorm, activation, pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub layer_kind: LayerKind,
    pub out_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: (usize, usize),
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub batchnorm: bool,
    pub pool: PoolSpec,
    #[serde(default)]
    pub padding_mode: PaddingMode,
    /// Amplitude strategy when `layer_kind` is `fac`.
    #[serde(default)]
    pub fac_mode: FacMode,
    /// Basis kernel count when `layer_kind` is `fdy`.
    #[serde(default = "default_basis")]
    pub fdy_basis: usize,
    #[serde(default = "default_true")]
    pub bias: bool,
}

impl BlockConfig {
    pub fn vanilla(out_channels: usize, pool: PoolSpec) -> Self {
        Self {
            layer_kind: LayerKind::Vanilla,
            out_channels,
            kernel: default_kernel(),
            activation: Activation::Relu,
            batchnorm: true,
            pool,
            padding_mode: PaddingMode::Zero,
            fac_mode: FacMode::AdaptDep,
            fdy_basis: default_basis(),
            bias: true,
        }
    }
}

/// Clip-level classifier: global average pool over `(T, F)` then a linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub n_classes: usize,
}

/// Recurrent stage that is counted by the accounting module but never executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnConfig {
    pub hidden: usize,
    pub layers: usize,
    #[serde(default = "default_true")]
    pub bidirectional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub blocks: Vec<BlockConfig>,
    #[serde(default)]
    pub head: Option<HeadConfig>,
    /// `(C, T, F)` of one input item.
    pub input_shape: (usize, usize, usize),
    #[serde(default)]
    pub rnn: Option<RnnConfig>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `(C, T, F)` seen by each block's input.
    pub fn block_inputs(&self) -> Result<Vec<(usize, usize, usize)>> {
        let (c0, t0, f0) = self.input_shape;
        if c0 == 0 || t0 == 0 || f0 == 0 {
            return Err(Error::InvalidShape {
                shape: vec![c0, t0, f0],
                reason: "input dimensions must be >= 1".into(),
            });
        }
        let mut shape = (c0, t0, f0);
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let index = i + 1;
            let (kt, kf) = block.kernel;
            if kt % 2 == 0 || kf % 2 == 0 {
                return Err(Error::InvalidBlock {
                    block: index,
                    reason: format!("kernel {kt}x{kf} must have odd sizes"),
                });
            }
            if block.out_channels == 0 {
                return Err(Error::InvalidBlock {
                    block: index,
                    reason: "out_channels must be >= 1".into(),
                });
            }
            if block.layer_kind == LayerKind::Fdy && block.fdy_basis == 0 {
                return Err(Error::InvalidBlock {
                    block: index,
                    reason: "fdy_basis must be >= 1".into(),
                });
            }
            let (pt, pf) = block.pool.window;
            if pt == 0 || pf == 0 || shape.1 % pt != 0 || shape.2 % pf != 0 {
                return Err(Error::InvalidBlock {
                    block: index,
                    reason: format!(
                        "input (T, F) = ({}, {}) not divisible by pool window ({pt}, {pf})",
                        shape.1, shape.2
                    ),
                });
            }
            out.push(shape);
            shape = (block.out_channels, shape.1 / pt, shape.2 / pf);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.block_inputs()?;
        if let Some(head) = self.head {
            if head.n_classes == 0 {
                return Err(Error::InvalidArgument("head needs at least one class".into()));
            }
        }
        Ok(())
    }

    /// `(C, T, F)` after the last block.
    pub fn feature_shape(&self) -> Result<(usize, usize, usize)> {
        let inputs = self.block_inputs()?;
        Ok(match (inputs.last(), self.blocks.last()) {
            (Some(&(_, t, f)), Some(b)) => (b.out_channels, t / b.pool.window.0, f / b.pool.window.1),
            _ => self.input_shape,
        })
    }

    /// Shape of `forward` output for a batch of `n`.
    pub fn output_shape(&self, n: usize) -> Result<[usize; 4]> {
        let (c, t, f) = self.feature_shape()?;
        Ok(match self.head {
            Some(h) => [n, h.n_classes, 1, 1],
            None => [n, c, t, f],
        })
    }

    /// Product of the frequency pooling windows.
    pub fn frequency_pooling_factor(&self) -> usize {
        self.blocks.iter().map(|b| b.pool.window.1).product()
    }

    pub fn n_fac(&self) -> usize {
        self.blocks.iter().filter(|b| b.layer_kind == LayerKind::Fac).count()
    }

    /// First `n` blocks become FAC, the rest vanilla.
    pub fn with_n_fac(&self, n: usize) -> Result<Self> {
        if n > self.blocks.len() {
            return Err(Error::OutOfRange(format!(
                "n_fac = {n} exceeds the {} available blocks",
                self.blocks.len()
            )));
        }
        let mut out = self.clone();
        for (i, block) in out.blocks.iter_mut().enumerate() {
            block.layer_kind = if i < n { LayerKind::Fac } else { LayerKind::Vanilla };
        }
        Ok(out)
    }

    pub fn with_layer_kind(&self, kind: LayerKind) -> Self {
        let mut out = self.clone();
        out.blocks.iter_mut().for_each(|b| b.layer_kind = kind);
        out
    }

    pub fn with_fac_mode(&self, mode: FacMode) -> Self {
        let mut out = self.clone();
        out.blocks.iter_mut().for_each(|b| b.fac_mode = mode);
        out
    }

    pub fn with_fdy_basis(&self, basis: usize) -> Self {
        let mut out = self.clone();
        out.blocks.iter_mut().for_each(|b| b.fdy_basis = basis);
        out
    }

    pub fn with_padding(&self, padding: PaddingMode) -> Self {
        let mut out = self.clone();
        out.blocks.iter_mut().for_each(|b| b.padding_mode = padding);
        out
    }

    pub fn with_input_shape(&self, input_shape: (usize, usize, usize)) -> Self {
        Self {
            input_shape,
            ..self.clone()
        }
    }
}
