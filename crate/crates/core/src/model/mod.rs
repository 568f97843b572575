//! Config-driven CNN stacks.

mod config;
pub mod presets;

pub use config::{Activation, BlockConfig, HeadConfig, LayerKind, ModelConfig, RnnConfig};

use std::io::Write;

use crate::error::{Error, Result};
use crate::freq::{FaConcatConv, FacConv, FdyConv};
use crate::layers::{
    BatchNorm, ContextGating, Conv2d, ConvSpec, GlobalAvgPool, Layer, Linear, Param, Pool, Relu,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// The convolution slot of a block.
#[derive(Debug, Clone)]
pub enum ConvLayer {
    Vanilla(Conv2d),
    Fac(FacConv),
    Fdy(FdyConv),
    FaConcat(FaConcatConv),
}

impl ConvLayer {
    fn inner(&self) -> &dyn Layer {
        match self {
            ConvLayer::Vanilla(l) => l,
            ConvLayer::Fac(l) => l,
            ConvLayer::Fdy(l) => l,
            ConvLayer::FaConcat(l) => l,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Layer {
        match self {
            ConvLayer::Vanilla(l) => l,
            ConvLayer::Fac(l) => l,
            ConvLayer::Fdy(l) => l,
            ConvLayer::FaConcat(l) => l,
        }
    }

    pub fn as_fac(&self) -> Option<&FacConv> {
        match self {
            ConvLayer::Fac(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ActivationLayer {
    Relu(Relu),
    ContextGating(ContextGating),
}

impl ActivationLayer {
    fn inner_mut(&mut self) -> &mut dyn Layer {
        match self {
            ActivationLayer::Relu(l) => l,
            ActivationLayer::ContextGating(l) => l,
        }
    }

    fn inner(&self) -> &dyn Layer {
        match self {
            ActivationLayer::Relu(l) => l,
            ActivationLayer::ContextGating(l) => l,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub conv: ConvLayer,
    pub batchnorm: Option<BatchNorm>,
    pub activation: ActivationLayer,
    pub pool: Pool,
    /// Block input `(C, T, F)`.
    pub input: (usize, usize, usize),
}

impl Block {
    fn layers_mut(&mut self) -> Vec<&mut dyn Layer> {
        let mut v: Vec<&mut dyn Layer> = vec![self.conv.inner_mut()];
        if let Some(bn) = self.batchnorm.as_mut() {
            v.push(bn);
        }
        v.push(self.activation.inner_mut());
        v.push(&mut self.pool);
        v
    }

    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out: Vec<(String, &Param)> = self
            .conv
            .inner()
            .params()
            .into_iter()
            .map(|p| (format!("conv.{}", p.name), p))
            .collect();
        if let Some(bn) = &self.batchnorm {
            out.extend(bn.params().into_iter().map(|p| (format!("bn.{}", p.name), p)));
        }
        out.extend(
            self.activation
                .inner()
                .params()
                .into_iter()
                .map(|p| (format!("gate.{}", p.name), p)),
        );
        out
    }
}

#[derive(Debug, Clone)]
pub struct Head {
    pub pool: GlobalAvgPool,
    pub linear: Linear,
}

/// A built network. `forward` runs the blocks and, if configured, the
/// classifier head.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    pub blocks: Vec<Block>,
    pub head: Option<Head>,
}

/// Builds the network described by `config`, drawing every initial parameter
/// from `rng` in block order.
pub fn build_model(config: &ModelConfig, rng: &mut Rng) -> Result<Model> {
    config.validate()?;
    let inputs = config.block_inputs()?;
    let mut blocks = Vec::with_capacity(config.blocks.len());
    for (i, (bc, &input)) in config.blocks.iter().zip(&inputs).enumerate() {
        let (c_in, _, f_in) = input;
        let spec = ConvSpec {
            in_channels: c_in,
            out_channels: bc.out_channels,
            kernel: bc.kernel,
            padding: bc.padding_mode,
            bias: bc.bias,
        };
        let wrap = |e: Error| Error::InvalidBlock {
            block: i + 1,
            reason: e.to_string(),
        };
        let conv = match bc.layer_kind {
            LayerKind::Vanilla => ConvLayer::Vanilla(Conv2d::new(spec, rng).map_err(wrap)?),
            LayerKind::Fac => ConvLayer::Fac(FacConv::new(spec, f_in, bc.fac_mode, rng).map_err(wrap)?),
            LayerKind::Fdy => ConvLayer::Fdy(FdyConv::new(spec, bc.fdy_basis, rng).map_err(wrap)?),
            LayerKind::Faconcat => ConvLayer::FaConcat(FaConcatConv::new(spec, rng).map_err(wrap)?),
        };
        let activation = match bc.activation {
            Activation::Relu => ActivationLayer::Relu(Relu::new()),
            Activation::ContextGating => {
                ActivationLayer::ContextGating(ContextGating::new(bc.out_channels, rng)?)
            }
        };
        blocks.push(Block {
            conv,
            batchnorm: bc.batchnorm.then(|| BatchNorm::new(bc.out_channels)),
            activation,
            pool: Pool::new(bc.pool),
            input,
        });
    }
    let head = match config.head {
        Some(h) => {
            let (c, _, _) = config.feature_shape()?;
            Some(Head {
                pool: GlobalAvgPool::new(),
                linear: Linear::new(c, h.n_classes, rng)?,
            })
        }
        None => None,
    };
    Ok(Model {
        config: config.clone(),
        blocks,
        head,
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Output of the convolutional blocks only.
    pub fn forward_features(&mut self, x: &Tensor) -> Result<Tensor> {
        let (c, t, f) = self.config.input_shape;
        if x.shape()[1..] != [c, t, f] {
            return Err(Error::mismatch("model input", [x.batch(), c, t, f], x.shape()));
        }
        let mut h = x.clone();
        for block in &mut self.blocks {
            for layer in block.layers_mut() {
                h = layer.forward(&h)?;
            }
        }
        Ok(h)
    }

    fn backward_features(&mut self, dy: &Tensor) -> Result<Tensor> {
        let mut g = dy.clone();
        for block in self.blocks.iter_mut().rev() {
            for layer in block.layers_mut().into_iter().rev() {
                g = layer.backward(&g)?;
            }
        }
        Ok(g)
    }

    pub fn fac_layers(&self) -> impl Iterator<Item = (usize, &FacConv)> {
        self.blocks
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.conv.as_fac().map(|f| (i + 1, f)))
    }

    /// Parameters with qualified names such as `block1.conv.p_freq`.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            out.extend(
                block
                    .named_params()
                    .into_iter()
                    .map(|(n, p)| (format!("block{}.{n}", i + 1), p)),
            );
        }
        if let Some(head) = &self.head {
            out.extend(head.linear.params().into_iter().map(|p| (format!("head.{}", p.name), p)));
        }
        out
    }
}

impl Layer for Model {
    fn name(&self) -> String {
        format!("model({} blocks)", self.blocks.len())
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let h = self.forward_features(x)?;
        match self.head.as_mut() {
            Some(head) => {
                let pooled = head.pool.forward(&h)?;
                head.linear.forward(&pooled)
            }
            None => Ok(h),
        }
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let g = match self.head.as_mut() {
            Some(head) => {
                let g = head.linear.backward(dy)?;
                head.pool.backward(&g)?
            }
            None => dy.clone(),
        };
        self.backward_features(&g)
    }

    fn params(&self) -> Vec<&Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for block in &mut self.blocks {
            out.extend(block.conv.inner_mut().params_mut());
            if let Some(bn) = block.batchnorm.as_mut() {
                out.extend(bn.params_mut());
            }
            out.extend(block.activation.inner_mut().params_mut());
        }
        if let Some(head) = self.head.as_mut() {
            out.extend(head.linear.params_mut());
        }
        out
    }

    fn set_training(&mut self, training: bool) {
        for block in &mut self.blocks {
            for layer in block.layers_mut() {
                layer.set_training(training);
            }
        }
    }
}

/// Encoding vector of one FAC block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingRow {
    /// 1-based block index.
    pub block: usize,
    pub freq: usize,
    pub values: Vec<f64>,
}

pub fn export_encodings(model: &Model) -> Result<Vec<EncodingRow>> {
    let rows: Vec<EncodingRow> = model
        .fac_layers()
        .map(|(block, fac)| EncodingRow {
            block,
            freq: fac.freq(),
            values: fac.encoding().to_vec(),
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument("model has no FAC blocks".into()));
    }
    Ok(rows)
}

/// One line per block: `block,freq,v0,v1,...` (rows have different lengths).
pub fn write_encodings_csv<W: Write>(rows: &[EncodingRow], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(out);
    writer.write_record(["block", "freq", "values"])?;
    for row in rows {
        let mut record = vec![row.block.to_string(), row.freq.to_string()];
        record.extend(row.values.iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use crate::freq::{fac_encoding_init, FacMode};

    #[test]
    fn probe_reduces_frequency_to_four() {
        let config = fig1_probe();
        let mut model = build_model(&config, &mut Rng::new(0)).unwrap();
        let y = model.forward(&Tensor::zeros([1, 1, 8, 64]).unwrap()).unwrap();
        assert_eq!(y.shape(), [1, 1, 8, 4]);
        assert_eq!(config.output_shape(1).unwrap(), y.shape());
    }

    #[test]
    fn crnn_block_frequencies_halve() {
        let inputs = crnn_conv().block_inputs().unwrap();
        let freqs: Vec<usize> = inputs.iter().map(|s| s.2).collect();
        assert_eq!(freqs, vec![128, 64, 32, 16, 8, 4, 2]);
        for (b, f) in freqs.iter().enumerate() {
            assert_eq!(*f, 128 >> b);
        }
    }

    #[test]
    fn every_preset_builds_with_matching_output_shape() {
        for name in PRESET_NAMES {
            let mut config = preset(name).unwrap();
            // short clips keep the crnn forward pass cheap
            config.input_shape.1 = 4;
            for kind in [LayerKind::Vanilla, LayerKind::Fac, LayerKind::Faconcat] {
                let config = config.with_layer_kind(kind);
                let mut model = build_model(&config, &mut Rng::new(1)).unwrap();
                let (c, t, f) = config.input_shape;
                let y = model.forward(&Tensor::zeros([2, c, t, f]).unwrap()).unwrap();
                assert_eq!(y.shape(), config.output_shape(2).unwrap(), "{name} {kind:?}");
            }
        }
    }

    #[test]
    fn no_fac_means_vanilla() {
        let config = crnn_conv().with_n_fac(0).unwrap();
        let model = build_model(&config.with_input_shape((1, 4, 128)), &mut Rng::new(0)).unwrap();
        assert_eq!(model.fac_layers().count(), 0);
        assert!(export_encodings(&model).is_err());
        assert!(model.named_params().iter().all(|(n, _)| !n.contains("p_freq")));
    }

    #[test]
    fn set_n_fac_ranges() {
        let base = crnn_conv();
        assert!(base.with_n_fac(7).unwrap().blocks.iter().all(|b| b.layer_kind == LayerKind::Fac));
        assert!(base.with_n_fac(0).unwrap().blocks.iter().all(|b| b.layer_kind == LayerKind::Vanilla));
        let three = base.with_n_fac(3).unwrap();
        assert_eq!(three.n_fac(), 3);
        assert_eq!(three.blocks[2].layer_kind, LayerKind::Fac);
        assert_eq!(three.blocks[3].layer_kind, LayerKind::Vanilla);
        assert!(matches!(base.with_n_fac(8), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn encodings_export_initial_vectors() {
        let config = crnn_conv().with_n_fac(7).unwrap().with_input_shape((1, 4, 128));
        let model = build_model(&config, &mut Rng::new(3)).unwrap();
        let rows = export_encodings(&model).unwrap();
        let lens: Vec<usize> = rows.iter().map(|r| r.values.len()).collect();
        assert_eq!(lens, vec![128, 64, 32, 16, 8, 4, 2]);
        assert_eq!(rows[0].block, 1);
        assert_eq!(rows[0].values, fac_encoding_init(128).unwrap());
        let mut buf = Vec::new();
        write_encodings_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.lines().nth(1).unwrap().starts_with("1,128,0,"));
    }

    #[test]
    fn divisibility_errors_name_the_block() {
        let mut config = fig1_probe();
        config.input_shape = (1, 8, 24);
        match build_model(&config, &mut Rng::new(0)) {
            Err(Error::InvalidBlock { block, .. }) => assert_eq!(block, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn build_is_deterministic() {
        let config = crnn_lite().with_n_fac(2).unwrap().with_fac_mode(FacMode::Adapt);
        let a = build_model(&config, &mut Rng::new(77)).unwrap();
        let b = build_model(&config, &mut Rng::new(77)).unwrap();
        let pa: Vec<Vec<f64>> = a.params().iter().map(|p| p.value.clone()).collect();
        let pb: Vec<Vec<f64>> = b.params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(pa, pb);
        let c = build_model(&config, &mut Rng::new(78)).unwrap();
        let weight = |m: &Model| {
            m.named_params()
                .into_iter()
                .find(|(n, _)| n == "block1.conv.weight")
                .map(|(_, p)| p.value.clone())
                .unwrap()
        };
        assert_ne!(weight(&a), weight(&c));
    }

    #[test]
    fn config_json_round_trip_and_strictness() {
        let config = crnn_conv().with_n_fac(3).unwrap();
        let text = config.to_json().unwrap();
        assert_eq!(ModelConfig::from_json(&text).unwrap(), config);
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["blocks"][0]["surprise"] = serde_json::json!(1);
        assert!(ModelConfig::from_json(&value.to_string()).is_err());
        value["blocks"][0].as_object_mut().unwrap().remove("surprise");
        value["extra"] = serde_json::json!(true);
        assert!(ModelConfig::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn whole_model_gradients_match_finite_differences() {
        let mut config = crnn_lite().with_n_fac(2).unwrap();
        config.input_shape = (1, 4, 16);
        config.blocks.truncate(2);
        config.blocks[1].activation = Activation::ContextGating;
        // a bias followed by batchnorm has an identically zero gradient
        config.blocks.iter_mut().for_each(|b| b.bias = false);
        let mut model = build_model(&config, &mut Rng::new(5)).unwrap();
        let mut rng = Rng::new(6);
        let x = Tensor::rand_uniform([2, 1, 4, 16], -1.0, 1.0, &mut rng).unwrap();
        let report = crate::gradcheck::grad_check(&mut model, &x, 1e-5, 1e-4, &mut rng).unwrap();
        assert!(report.passed, "{report:?}");
    }
}
