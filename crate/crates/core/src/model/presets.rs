//! Named architectures.

use super::config::{Activation, BlockConfig, HeadConfig, ModelConfig, RnnConfig};
use crate::error::{Error, Result};
use crate::layers::{PaddingMode, PoolSpec};

pub const PRESET_NAMES: [&str; 3] = ["fig1-probe", "crnn-conv", "crnn-lite"];

/// Channels of the 7-block CRNN feature extractor (baseline widths doubled).
pub const CRNN_CHANNELS: [usize; 7] = [32, 64, 128, 256, 256, 256, 256];
pub const CRNN_TIME_POOL: [usize; 7] = [2, 2, 1, 1, 1, 1, 1];

/// Four single-channel 3x3 conv + ReLU blocks, each followed by frequency-only
/// average pooling of width 2, on a 64-bin input. No batchnorm, no head.
pub fn fig1_probe() -> ModelConfig {
    let block = BlockConfig {
        batchnorm: false,
        ..BlockConfig::vanilla(1, PoolSpec::average((1, 2)))
    };
    ModelConfig {
        blocks: vec![block; 4],
        head: None,
        input_shape: (1, 8, 64),
        rnn: None,
    }
}

/// The 7-block CRNN convolutional module on 128 mel bins with context gating,
/// batchnorm and frequency pooling of 2 in every block. The bidirectional
/// 2-layer GRU with 256 hidden units is recorded for parameter accounting only.
///
/// `T = 624` keeps the time pooling exactly divisible; accounting accepts any T.
pub fn crnn_conv() -> ModelConfig {
    let blocks = CRNN_CHANNELS
        .iter()
        .zip(CRNN_TIME_POOL)
        .map(|(&c, pt)| BlockConfig {
            activation: Activation::ContextGating,
            ..BlockConfig::vanilla(c, PoolSpec::average((pt, 2)))
        })
        .collect();
    ModelConfig {
        blocks,
        head: Some(HeadConfig { n_classes: 10 }),
        input_shape: (1, 624, 128),
        rnn: Some(RnnConfig {
            hidden: 256,
            layers: 2,
            bidirectional: true,
        }),
    }
}

/// Desk-scale CRNN for the synthetic benchmark: 4 blocks on 64 bins with
/// circular frequency padding, so frequency shifts by multiples of 16 are
/// provably invisible to the vanilla variant.
pub fn crnn_lite() -> ModelConfig {
    let channels = [4, 8, 8, 8];
    let time_pool = [2, 2, 1, 1];
    let blocks = channels
        .iter()
        .zip(time_pool)
        .map(|(&c, pt)| BlockConfig {
            padding_mode: PaddingMode::CircularFrequency,
            ..BlockConfig::vanilla(c, PoolSpec::average((pt, 2)))
        })
        .collect();
    ModelConfig {
        blocks,
        head: Some(HeadConfig { n_classes: 2 }),
        input_shape: (1, 8, 64),
        rnn: None,
    }
}

pub fn preset(name: &str) -> Result<ModelConfig> {
    match name {
        "fig1-probe" => Ok(fig1_probe()),
        "crnn-conv" => Ok(crnn_conv()),
        "crnn-lite" => Ok(crnn_lite()),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset '{other}', expected one of {PRESET_NAMES:?}"
        ))),
    }
}
