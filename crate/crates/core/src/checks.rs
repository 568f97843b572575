//! Gradient-check cases covering every layer kind.

use crate::error::{Error, Result};
use crate::freq::{FaConcatConv, FacConv, FacMode, FdyConv};
use crate::gradcheck::{grad_check, GradCheckReport};
use crate::layers::{
    BatchNorm, ContextGating, Conv2d, ConvSpec, GlobalAvgPool, Layer, Linear, PaddingMode, Param, Pool,
    PoolSpec, Relu, Sigmoid, SoftmaxCrossEntropy,
};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const LAYER_CASES: [&str; 17] = [
    "conv_zero",
    "conv_circular",
    "avg_pool",
    "max_pool",
    "relu",
    "sigmoid",
    "context_gating",
    "linear",
    "batchnorm",
    "global_pool",
    "softmax_ce",
    "faconcat",
    "fdy_k1",
    "fdy_k4",
    "fac_fixed",
    "fac_adapt",
    "fac_adapt_dep",
];

/// Deliberately wrong layer: ReLU whose backward pass doubles the gradient.
pub const NEGATIVE_CONTROL: &str = "corrupted_relu";

#[derive(Debug, Clone)]
struct CorruptedRelu(Relu);

impl Layer for CorruptedRelu {
    fn name(&self) -> String {
        NEGATIVE_CONTROL.into()
    }

    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.0.forward(x)
    }

    fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        Ok(self.0.backward(dy)?.scale(2.0))
    }
}

fn randomize(params: Vec<&mut Param>, rng: &mut Rng) {
    for p in params {
        p.value.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
    }
}

/// Random input shape for a case: `N` in 1..=2, `C` in 1..=3, `T` in 2..=4, `F` in 4..=7,
/// with `T` and `F` rounded to even sizes for pooling.
fn draw_shape(case: &str, rng: &mut Rng) -> Shape {
    let mut shape = [1 + rng.below(2), 1 + rng.below(3), 2 + rng.below(3), 4 + rng.below(4)];
    if case.ends_with("_pool") && case != "global_pool" {
        shape[2] += shape[2] % 2;
        shape[3] += shape[3] % 2;
    }
    if case == "softmax_ce" {
        shape = [shape[0] + 1, shape[1] + 1, 1, 1];
    }
    shape
}

/// Builds the layer named `case` for inputs of `shape`, plus a random input.
pub fn build_case(case: &str, shape: Shape, rng: &mut Rng) -> Result<(Box<dyn Layer>, Tensor)> {
    let [n, c, _, f] = shape;
    let spec = ConvSpec::new(c, 2, (3, 3));
    let layer: Box<dyn Layer> = match case {
        "conv_zero" => Box::new(Conv2d::new(spec, rng)?),
        "conv_circular" => Box::new(Conv2d::new(spec.with_padding(PaddingMode::CircularFrequency), rng)?),
        "avg_pool" => Box::new(Pool::new(PoolSpec::average((2, 2)))),
        "max_pool" => Box::new(Pool::new(PoolSpec::max((2, 2)))),
        "relu" => Box::new(Relu::new()),
        "sigmoid" => Box::new(Sigmoid::new()),
        "context_gating" => Box::new(ContextGating::new(c, rng)?),
        "linear" => Box::new(Linear::new(c, 3, rng)?),
        "batchnorm" => {
            let mut bn = BatchNorm::new(c);
            randomize(bn.params_mut(), rng);
            bn.gamma.value.iter_mut().for_each(|g| *g += 1.0);
            Box::new(bn)
        }
        "global_pool" => Box::new(GlobalAvgPool::new()),
        "softmax_ce" => Box::new(SoftmaxCrossEntropy::new((0..n).map(|_| rng.below(c)).collect())),
        "faconcat" => Box::new(FaConcatConv::new(spec, rng)?),
        "fdy_k1" | "fdy_k4" => {
            let basis = if case == "fdy_k1" { 1 } else { 4 };
            let mut fdy = FdyConv::new(spec, basis, rng)?;
            randomize(vec![&mut fdy.attn_w, &mut fdy.attn_b], rng);
            Box::new(fdy)
        }
        "fac_fixed" | "fac_adapt" | "fac_adapt_dep" => {
            let mode: FacMode = case.trim_start_matches("fac_").parse()?;
            let mut fac = FacConv::new(spec, f, mode, rng)?;
            randomize(vec![&mut fac.attn_w, &mut fac.attn_b], rng);
            Box::new(fac)
        }
        NEGATIVE_CONTROL => Box::new(CorruptedRelu(Relu::new())),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown layer case '{other}', expected one of {LAYER_CASES:?} or {NEGATIVE_CONTROL}"
            )))
        }
    };
    let mut x = Tensor::rand_uniform(shape, -1.0, 1.0, rng)?;
    if matches!(case, "relu" | "corrupted_relu") {
        // Keep finite differences away from the kink at zero.
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v = 0.05_f64.copysign(*v);
            }
        }
    }
    Ok((layer, x))
}

/// Runs `case` on `shapes` random shapes and returns one report per shape.
pub fn check_case(case: &str, shapes: usize, step: f64, tolerance: f64, rng: &mut Rng) -> Result<Vec<GradCheckReport>> {
    (0..shapes)
        .map(|_| {
            let shape = draw_shape(case, rng);
            let (mut layer, x) = build_case(case, shape, rng)?;
            let mut report = grad_check(layer.as_mut(), &x, step, tolerance, rng)?;
            report.layer = format!("{case} {shape:?}");
            Ok(report)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};

    #[test]
    fn every_case_passes() {
        let mut rng = Rng::new(9);
        for case in LAYER_CASES {
            for r in check_case(case, 3, DEFAULT_STEP, DEFAULT_TOLERANCE, &mut rng).unwrap() {
                assert!(r.passed, "{r:?}");
            }
        }
    }

    #[test]
    fn negative_control_fails() {
        let reports = check_case(NEGATIVE_CONTROL, 1, DEFAULT_STEP, DEFAULT_TOLERANCE, &mut Rng::new(1)).unwrap();
        assert!(!reports[0].passed);
    }

    #[test]
    fn unknown_case_is_rejected() {
        assert!(build_case("nope", [1, 1, 2, 4], &mut Rng::new(0)).is_err());
    }
}
