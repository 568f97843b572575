//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::layers::Layer;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Denominator floor in the relative error `|a - n| / max(|a|, |n|, floor)`.
pub const REL_ERROR_FLOOR: f64 = 1e-8;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layer: String,
    /// Maximum relative error over input elements.
    pub input_error: f64,
    /// `(parameter name, maximum relative error)` per parameter.
    pub param_errors: Vec<(String, f64)>,
    pub step: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.param_errors
            .iter()
            .map(|(_, e)| *e)
            .fold(self.input_error, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn finite_forward<L: Layer + ?Sized>(layer: &mut L, x: &Tensor) -> Result<Tensor> {
    let y = layer.forward(x)?;
    if !y.is_finite() {
        return Err(Error::NumericFailure {
            layer: layer.name(),
            detail: "non-finite output during finite differencing".into(),
        });
    }
    Ok(y)
}

/// `(<up, u> - <down, u>) / 2h`, differencing outputs elementwise before the
/// weighted sum so the large loss terms cancel exactly.
fn central_difference(up: &Tensor, down: &Tensor, cotangent: &Tensor, step: f64) -> f64 {
    up.data()
        .iter()
        .zip(down.data())
        .zip(cotangent.data())
        .map(|((a, b), u)| (a - b) * u)
        .sum::<f64>()
        / (2.0 * step)
}

/// Compares analytic input and parameter gradients of `layer` at `input`
/// against central differences of `L = <layer(x), u>` for a random cotangent `u`.
pub fn grad_check<L: Layer + ?Sized>(
    layer: &mut L,
    input: &Tensor,
    step: f64,
    tolerance: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let name = layer.name();
    let numeric_failure = |detail: &str| Error::NumericFailure {
        layer: name.clone(),
        detail: detail.to_string(),
    };
    if !input.is_finite() {
        return Err(numeric_failure("non-finite input"));
    }

    let y = layer.forward(input)?;
    if !y.is_finite() {
        return Err(numeric_failure("non-finite forward output"));
    }
    let cotangent = Tensor::rand_uniform(y.shape(), -1.0, 1.0, rng)?;
    layer.zero_grad();
    let dx = layer.backward(&cotangent)?;
    if !dx.is_finite() {
        return Err(numeric_failure("non-finite input gradient"));
    }
    let analytic_params: Vec<(String, Vec<f64>)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();

    let mut x = input.clone();
    let mut input_error: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + step;
        let up = finite_forward(layer, &x)?;
        x.data_mut()[i] = orig - step;
        let down = finite_forward(layer, &x)?;
        x.data_mut()[i] = orig;
        let numeric = central_difference(&up, &down, &cotangent, step);
        input_error = input_error.max(relative_error(dx.data()[i], numeric));
    }

    let mut param_errors = Vec::with_capacity(analytic_params.len());
    for (pi, (pname, analytic)) in analytic_params.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (j, &a) in analytic.iter().enumerate() {
            let orig = layer.params()[pi].value[j];
            layer.params_mut()[pi].value[j] = orig + step;
            let up = finite_forward(layer, input)?;
            layer.params_mut()[pi].value[j] = orig - step;
            let down = finite_forward(layer, input)?;
            layer.params_mut()[pi].value[j] = orig;
            worst = worst.max(relative_error(a, central_difference(&up, &down, &cotangent, step)));
        }
        param_errors.push((pname.clone(), worst));
    }

    let mut report = GradCheckReport {
        layer: name,
        input_error,
        param_errors,
        step,
        tolerance,
        passed: false,
    };
    report.passed = report.max_error() < tolerance;
    Ok(report)
}
