use serde::Serialize;

use super::synth::SynthData;
use super::train::{train, TrainSpec};
use crate::accounting::count_params;
use crate::error::Result;
use crate::model::{build_model, ModelConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_fac: usize,
    pub seed: u64,
    pub fac_params: u64,
    pub final_train_loss: f64,
    pub test_accuracy: f64,
}

/// FAC parameters of a configuration, from the accounting rows.
pub fn fac_params(config: &ModelConfig) -> Result<u64> {
    Ok(count_params(config)?.params_where(|r| r.name.contains(".fac.")))
}

/// Trains one model per `n` in `n_values`, with the first `n` blocks FAC.
///
/// Every run builds its model from `Rng::new(spec.seed + i)` for the `i`-th
/// entry and reuses the batch-order seed of `spec`.
pub fn run_nfac_sweep(base: &ModelConfig, n_values: &[usize], data: &SynthData, spec: &TrainSpec) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(n_values.len());
    for (i, &n) in n_values.iter().enumerate() {
        let config = base.with_n_fac(n)?;
        let seed = spec.seed.wrapping_add(i as u64);
        let mut model = build_model(&config, &mut Rng::new(seed))?;
        let history = train(&mut model, &data.train, &data.test, spec)?;
        let last = history.last().copied().expect("epochs >= 1");
        rows.push(SweepRow {
            n_fac: n,
            seed,
            fac_params: fac_params(&config)?,
            final_train_loss: last.train_loss,
            test_accuracy: last.test_accuracy,
        });
    }
    Ok(rows)
}
