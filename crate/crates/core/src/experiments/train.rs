use serde::{Deserialize, Serialize};

use super::synth::Dataset;
use crate::error::{Error, Result};
use crate::layers::{softmax_cross_entropy, Layer};
use crate::model::Model;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the batch order.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            batch_size: 16,
            epochs: 50,
            seed: 42,
        }
    }
}

impl TrainSpec {
    /// Schedule used for the amplitude ablation.
    pub fn ablation() -> Self {
        Self {
            epochs: 30,
            ..Self::default()
        }
    }

    /// A zero learning rate is accepted and leaves the parameters untouched.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

/// Adam with bias correction over a flat list of parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, model: &Model) -> Self {
        let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self {
            lr,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut Model) {
        if self.lr == 0.0 {
            return;
        }
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for ((p, m), v) in model.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                p.value[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Eval-mode logits `(N, K, 1, 1)`, computed in chunks.
pub fn predict_logits(model: &mut Model, x: &Tensor) -> Result<Tensor> {
    const CHUNK: usize = 64;
    model.set_training(false);
    let indices: Vec<usize> = (0..x.batch()).collect();
    let parts = indices
        .chunks(CHUNK)
        .map(|ix| model.forward(&x.gather_batch(ix)?))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&parts)
}

/// Fraction of items whose arg-max logit (first on ties) matches the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.channels();
    let correct = logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &label)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (j, &v)| if v > row[b] { j } else { b });
            best == label
        })
        .count();
    correct as f64 / labels.len() as f64
}

pub fn evaluate(model: &mut Model, data: &Dataset) -> Result<f64> {
    let logits = predict_logits(model, &data.x)?;
    Ok(accuracy(&logits, &data.labels))
}

/// Mini-batch Adam training. Batches are reshuffled every epoch from a
/// stream seeded by `spec.seed`; test accuracy is measured after each epoch.
pub fn train(model: &mut Model, train_set: &Dataset, test_set: &Dataset, spec: &TrainSpec) -> Result<Vec<HistoryRow>> {
    spec.validate()?;
    let (c, t, f) = model.config().input_shape;
    for (name, set) in [("train", train_set), ("test", test_set)] {
        if set.is_empty() || set.x.shape()[1..] != [c, t, f] {
            return Err(Error::mismatch(
                format!("{name} set"),
                [set.len(), c, t, f],
                set.x.shape(),
            ));
        }
    }
    let mut rng = Rng::new(spec.seed).fork(0x7261_696e);
    let mut adam = Adam::new(spec.lr, model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(spec.epochs);
    for epoch in 1..=spec.epochs {
        rng.shuffle(&mut order);
        model.set_training(true);
        let mut total = 0.0;
        for (b, batch) in order.chunks(spec.batch_size).enumerate() {
            let x = train_set.x.gather_batch(batch)?;
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let logits = model.forward(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NumericFailure {
                    layer: model.name(),
                    detail: format!("non-finite loss {loss} at epoch {epoch}, batch {}", b + 1),
                });
            }
            model.zero_grad();
            model.backward(&grad)?;
            adam.step(model);
            total += loss * batch.len() as f64;
        }
        history.push(HistoryRow {
            epoch,
            train_loss: total / train_set.len() as f64,
            test_accuracy: evaluate(model, test_set)?,
        });
    }
    model.set_training(false);
    Ok(history)
}
