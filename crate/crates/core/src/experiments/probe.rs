use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftRow {
    pub shift: isize,
    /// Largest elementwise difference of the feature maps.
    pub raw_difference: f64,
    /// Largest difference after averaging each channel over `(T, F)`.
    pub pooled_difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftProbeResult {
    pub base_bin: usize,
    pub epsilon: f64,
    pub rows: Vec<ShiftRow>,
    /// Largest `|shift|` whose pooled difference is below `epsilon`.
    pub tolerated_shift: Option<usize>,
}

/// One at every frame of frequency bin `bin`, zero elsewhere.
pub fn delta_input(shape: (usize, usize, usize), bin: usize) -> Result<Tensor> {
    let (c, t, f) = shape;
    if bin >= f {
        return Err(Error::OutOfRange(format!("bin {bin} outside 0..{f}")));
    }
    let mut x = Tensor::zeros([1, c, t, f])?;
    for ci in 0..c {
        for ti in 0..t {
            x.set(0, ci, ti, bin, 1.0);
        }
    }
    Ok(x)
}

fn channel_means(y: &Tensor) -> Vec<f64> {
    let plane = y.time() * y.freq();
    y.data()
        .chunks_exact(plane)
        .map(|c| c.iter().sum::<f64>() / plane as f64)
        .collect()
}

/// Feeds a delta spectrogram at `base_bin + shift` through the model's
/// convolutional blocks (eval mode) and compares against the unshifted run.
pub fn run_shift_probe(model: &mut Model, base_bin: usize, shifts: &[isize], epsilon: f64) -> Result<ShiftProbeResult> {
    let input = model.config().input_shape;
    let freq = input.2;
    for &s in shifts {
        let bin = base_bin as isize + s;
        if bin < 0 || bin >= freq as isize {
            return Err(Error::OutOfRange(format!(
                "shift {s} moves bin {base_bin} to {bin}, outside 0..{freq}"
            )));
        }
    }
    model.set_training(false);
    let reference = model.forward_features(&delta_input(input, base_bin)?)?;
    let reference_pooled = channel_means(&reference);
    let mut rows = Vec::with_capacity(shifts.len());
    for &s in shifts {
        let y = model.forward_features(&delta_input(input, (base_bin as isize + s) as usize)?)?;
        let pooled_difference = channel_means(&y)
            .iter()
            .zip(&reference_pooled)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.push(ShiftRow {
            shift: s,
            raw_difference: y.max_abs_diff(&reference)?,
            pooled_difference,
        });
    }
    let tolerated_shift = rows
        .iter()
        .filter(|r| r.pooled_difference < epsilon)
        .map(|r| r.shift.unsigned_abs())
        .max();
    Ok(ShiftProbeResult {
        base_bin,
        epsilon,
        rows,
        tolerated_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::PaddingMode;
    use crate::model::{build_model, presets};
    use crate::rng::Rng;

    #[test]
    fn zero_shift_is_exactly_zero() {
        let mut model = build_model(&presets::fig1_probe(), &mut Rng::new(1)).unwrap();
        let r = run_shift_probe(&mut model, 19, &[0], 1e-9).unwrap();
        assert_eq!(r.rows[0].raw_difference, 0.0);
        assert_eq!(r.rows[0].pooled_difference, 0.0);
        assert_eq!(r.tolerated_shift, Some(0));
    }

    #[test]
    fn circular_network_ignores_shift_by_pooling_factor() {
        let config = presets::fig1_probe().with_padding(PaddingMode::CircularFrequency);
        let mut model = build_model(&config, &mut Rng::new(5)).unwrap();
        let r = run_shift_probe(&mut model, 19, &[16, 32, -16], 1e-12).unwrap();
        for row in &r.rows {
            assert!(row.pooled_difference <= 1e-12, "{row:?}");
        }
        assert_eq!(r.tolerated_shift, Some(32));
    }

    #[test]
    fn out_of_range_shift_is_rejected() {
        let mut model = build_model(&presets::fig1_probe(), &mut Rng::new(1)).unwrap();
        assert!(matches!(run_shift_probe(&mut model, 60, &[10], 1e-9), Err(Error::OutOfRange(_))));
        assert!(run_shift_probe(&mut model, 3, &[-4], 1e-9).is_err());
    }
}
