//! Shift probe, synthetic benchmark, training loop and studies built on them.

mod ablation;
mod probe;
mod sweep;
mod synth;
mod train;

pub use ablation::{run_ablation, ABLATION_MARGIN, AblationResult, AblationRun, AblationSummary};
pub use probe::{delta_input, run_shift_probe, ShiftProbeResult, ShiftRow};
pub use sweep::{fac_params, run_nfac_sweep, SweepRow};
pub use synth::{gen_synth, Dataset, SampleInfo, SynthData, SynthSpec};
pub use train::{accuracy, evaluate, predict_logits, train, Adam, HistoryRow, TrainSpec};

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// Output file name for experiment `id` run with `seed`, e.g. `sweep_seed42.csv`.
pub fn csv_file_name(id: &str, seed: u64) -> String {
    format!("{id}_seed{seed}.csv")
}

/// Writes `rows` as CSV with a header taken from the field names.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
