//! Rank-4 `(batch, channel, time, frequency)` tensor of `f64`.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tensor dimensions in `(N, C, T, F)` order.
pub type Shape = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

fn check_shape(shape: Shape) -> Result<()> {
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "every dimension must be at least 1".into(),
        });
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("data length {} does not match {len}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn fill(shape: Shape, value: f64) -> Result<Self> {
        check_shape(shape)?;
        Ok(Self {
            shape,
            data: vec![value; shape.iter().product()],
        })
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::fill(shape, 0.0)
    }

    /// Elements drawn independently from `[lo, hi)`.
    pub fn rand_uniform(shape: Shape, lo: f64, hi: f64, rng: &mut Rng) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "uniform range requires lo < hi, got [{lo}, {hi})"
            )));
        }
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(lo, hi)).collect();
        Ok(Self { shape, data })
    }

    pub fn rand_normal(shape: Shape, std: f64, rng: &mut Rng) -> Result<Self> {
        check_shape(shape)?;
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.normal(0.0, std)).collect();
        Ok(Self { shape, data })
    }

    pub(crate) fn zeros_unchecked(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros_unchecked(self.shape)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn time(&self) -> usize {
        self.shape[2]
    }

    pub fn freq(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, t: usize, f: usize) -> usize {
        let [_, cs, ts, fs] = self.shape;
        ((n * cs + c) * ts + t) * fs + f
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, t: usize, f: usize) -> f64 {
        self.data[self.index(n, c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, t: usize, f: usize, value: f64) {
        let i = self.index(n, c, t, f);
        self.data[i] = value;
    }

    /// Contiguous frequency row at `(n, c, t)`.
    #[inline]
    pub fn row(&self, n: usize, c: usize, t: usize) -> &[f64] {
        let i = self.index(n, c, t, 0);
        &self.data[i..i + self.shape[3]]
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::mismatch("reshape", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::mismatch("add", self.shape, other.shape));
        }
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::mismatch("add_assign", self.shape, other.shape));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::mismatch("dot", self.shape, other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest elementwise absolute difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::mismatch("max_abs_diff", self.shape, other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Circular shift along frequency: `out[.., f] = self[.., (f - delta) mod F]`.
    pub fn roll_freq(&self, delta: isize) -> Self {
        let fs = self.shape[3] as isize;
        let shift = delta.rem_euclid(fs) as usize;
        let mut out = self.zeros_like();
        for (src, dst) in self
            .data
            .chunks_exact(self.shape[3])
            .zip(out.data.chunks_exact_mut(self.shape[3]))
        {
            for (f, &v) in src.iter().enumerate() {
                dst[(f + shift) % fs as usize] = v;
            }
        }
        out
    }

    /// Selects batch items `indices` into a new tensor.
    pub fn gather_batch(&self, indices: &[usize]) -> Result<Self> {
        let item = self.shape[1] * self.shape[2] * self.shape[3];
        let mut data = Vec::with_capacity(indices.len() * item);
        for &i in indices {
            if i >= self.shape[0] {
                return Err(Error::OutOfRange(format!(
                    "batch index {i} >= {}",
                    self.shape[0]
                )));
            }
            data.extend_from_slice(&self.data[i * item..(i + 1) * item]);
        }
        Tensor::new([indices.len(), self.shape[1], self.shape[2], self.shape[3]], data)
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let [_, c, t, f] = first.shape;
        let mut n = 0;
        let mut data = Vec::new();
        for item in items {
            if item.shape[1..] != first.shape[1..] {
                return Err(Error::mismatch("stack", first.shape, item.shape));
            }
            n += item.shape[0];
            data.extend_from_slice(&item.data);
        }
        Tensor::new([n, c, t, f], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::rng::Rng;

    #[test]
    fn fill_examples() {
        assert_eq!(Tensor::fill([1, 1, 1, 3], 0.0).unwrap().data(), &[0.0; 3]);
        assert_eq!(Tensor::fill([1, 1, 2, 2], 1.5).unwrap().data(), &[1.5; 4]);
        assert!(matches!(
            Tensor::fill([1, 1, 1, 0], 1.0),
            Err(Error::InvalidShape { .. })
        ));
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Tensor::new([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn rand_uniform_is_deterministic() {
        let a = Tensor::rand_uniform([2, 3, 4, 5], -1.0, 1.0, &mut Rng::new(42)).unwrap();
        let b = Tensor::rand_uniform([2, 3, 4, 5], -1.0, 1.0, &mut Rng::new(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rand_uniform_range() {
        let a = Tensor::rand_uniform([1, 1, 1, 4], 0.0, 1.0, &mut Rng::new(7)).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a.data().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn rand_uniform_mean_is_centered() {
        let a = Tensor::rand_uniform([2, 1, 8, 8], -1.0, 1.0, &mut Rng::new(3)).unwrap();
        assert_eq!(a.len(), 128);
        let m = a.mean();
        assert!(m > -0.35 && m < 0.35, "mean {m}");
    }

    #[test]
    fn rand_uniform_rejects_empty_range() {
        assert!(Tensor::rand_uniform([1, 1, 1, 1], 1.0, 1.0, &mut Rng::new(0)).is_err());
        assert!(Tensor::rand_uniform([1, 1, 1, 1], 2.0, 1.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn roll_freq_moves_elements_right() {
        let x = Tensor::new([1, 1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.roll_freq(1).data(), &[4.0, 1.0, 2.0, 3.0]);
        assert_eq!(x.roll_freq(-1).data(), &[2.0, 3.0, 4.0, 1.0]);
        assert_eq!(x.roll_freq(4), x);
    }

    proptest! {
        #[test]
        fn index_round_trip(n in 1usize..3, c in 1usize..4, t in 1usize..5, f in 1usize..6, seed in 0u64..1000) {
            let mut x = Tensor::zeros([n, c, t, f]).unwrap();
            let mut rng = Rng::new(seed);
            let pos = (rng.below(n), rng.below(c), rng.below(t), rng.below(f));
            let v = rng.uniform(-5.0, 5.0);
            x.set(pos.0, pos.1, pos.2, pos.3, v);
            prop_assert_eq!(x.get(pos.0, pos.1, pos.2, pos.3), v);
            prop_assert_eq!(x.data().iter().filter(|&&e| e != 0.0).count(), usize::from(v != 0.0));
        }
    }
}
