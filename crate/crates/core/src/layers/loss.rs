use super::{cached, expect_shape, Layer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch.
///
/// `logits` has shape `(N, n_classes, 1, 1)`. Returns the loss and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n_len, k, t, f] = logits.shape();
    if t != 1 || f != 1 {
        return Err(Error::mismatch("class logits", [n_len, k, 1, 1], logits.shape()));
    }
    if labels.len() != n_len {
        return Err(Error::mismatch("label count", n_len, labels.len()));
    }
    let mut grad = logits.zeros_like();
    let mut loss = 0.0;
    for (n, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::OutOfRange(format!("label {label} >= {k} classes")));
        }
        let row = &logits.data()[n * k..(n + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        let g = &mut grad.data_mut()[n * k..(n + 1) * k];
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            *gj = (p - f64::from(u8::from(j == label))) / n_len as f64;
        }
    }
    Ok((loss / n_len as f64, grad))
}

/// [`softmax_cross_entropy`] with fixed labels, exposed as a layer that maps
/// logits to a `(1, 1, 1, 1)` loss tensor.
#[derive(Debug, Clone)]
pub struct SoftmaxCrossEntropy {
    labels: Vec<usize>,
    grad: Option<Tensor>,
}

impl SoftmaxCrossEntropy {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels, grad: None }
    }
}

impl Layer for SoftmaxCrossEntropy {
    fn name(&self) -> String {
        "softmax_cross_entropy".into()
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let (loss, grad) = softmax_cross_entropy(x, &self.labels)?;
        self.grad = Some(grad);
        Tensor::new([1, 1, 1, 1], vec![loss])
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let grad = cached(&self.grad, "softmax_cross_entropy")?;
        expect_shape("loss cotangent", [1, 1, 1, 1], dy)?;
        Ok(grad.scale(dy.data()[0]))
    }
}
