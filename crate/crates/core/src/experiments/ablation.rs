use serde::Serialize;

use super::sweep::fac_params;
use super::synth::SynthData;
use super::train::{train, TrainSpec};
use crate::error::{Error, Result};
use crate::freq::FacMode;
use crate::model::{build_model, ModelConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AblationRun {
    pub mode: FacMode,
    pub seed: u64,
    pub fac_params: u64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AblationSummary {
    pub mode: FacMode,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub runs: Vec<AblationRun>,
    pub summary: Vec<AblationSummary>,
}

/// Required lead of `adapt_dep` over `fixed` in mean accuracy.
pub const ABLATION_MARGIN: f64 = 0.05;

impl AblationResult {
    pub fn mean(&self, mode: FacMode) -> Option<f64> {
        self.summary.iter().find(|s| s.mode == mode).map(|s| s.mean_accuracy)
    }

    /// `adapt_dep >= adapt >= fixed` and `adapt_dep - fixed >= margin`.
    /// False when any of the three modes is missing.
    pub fn ordering_holds(&self, margin: f64) -> bool {
        match (
            self.mean(FacMode::AdaptDep),
            self.mean(FacMode::Adapt),
            self.mean(FacMode::Fixed),
        ) {
            (Some(dep), Some(adapt), Some(fixed)) => dep >= adapt && adapt >= fixed && dep - fixed >= margin,
            _ => false,
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains `config` once per `(mode, seed)`, every FAC block switched to `mode`.
///
/// For a given seed all modes start from the same draw of the shared
/// parameters and see the same batch order.
pub fn run_ablation(
    config: &ModelConfig,
    modes: &[FacMode],
    seeds: &[u64],
    data: &SynthData,
    spec: &TrainSpec,
) -> Result<AblationResult> {
    if modes.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one mode and one seed".into()));
    }
    if config.n_fac() == 0 {
        return Err(Error::InvalidArgument("ablation config has no FAC blocks".into()));
    }
    let mut runs = Vec::with_capacity(modes.len() * seeds.len());
    for &mode in modes {
        let variant = config.with_fac_mode(mode);
        for &seed in seeds {
            let mut model = build_model(&variant, &mut Rng::new(seed))?;
            let run_spec = TrainSpec { seed, ..*spec };
            let history = train(&mut model, &data.train, &data.test, &run_spec)?;
            runs.push(AblationRun {
                mode,
                seed,
                fac_params: fac_params(&variant)?,
                test_accuracy: history.last().expect("epochs >= 1").test_accuracy,
            });
        }
    }
    let summary = modes
        .iter()
        .map(|&mode| {
            let acc: Vec<f64> = runs.iter().filter(|r| r.mode == mode).map(|r| r.test_accuracy).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            AblationSummary {
                mode,
                runs: acc.len(),
                mean_accuracy,
                std_accuracy,
            }
        })
        .collect();
    Ok(AblationResult { runs, summary })
}
