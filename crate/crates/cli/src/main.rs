//! `facnet` command-line entry point.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const SEED_ENV: &str = "FACNET_SEED";

#[derive(Debug, Parser)]
#[command(name = "facnet", version, about = "Frequency-aware convolution experiments and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed; the FACNET_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Padding {
    Zero,
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Separation,
    Ablation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference gradient check of every layer kind.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Layer cases to check (comma separated); defaults to all.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<String>,
        /// Random shapes per layer case.
        #[arg(long, default_value_t = 3)]
        shapes: usize,
    },
    /// Feed a frequency delta through a network at several shifts.
    ShiftProbe {
        #[command(flatten)]
        common: Common,
        /// Named architecture, ignored when --config is given.
        #[arg(long, default_value = "fig1-probe")]
        preset: String,
        /// Override the padding of every block.
        #[arg(long, value_enum)]
        padding: Option<Padding>,
        /// Frequency bin of the delta, in --index-base numbering.
        #[arg(long, default_value_t = 19)]
        base_bin: usize,
        /// Whether --base-bin counts from 0 or 1.
        #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
        index_base: u8,
        /// Frequency shifts in bins (comma separated).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,10,16")]
        shifts: Vec<isize>,
        /// Threshold below which a pooled difference counts as unchanged.
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
    },
    /// Generate the shift-paired synthetic dataset and write its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Built-in dataset variant, ignored when --config is given.
        #[arg(long, value_enum, default_value = "separation")]
        dataset: DatasetKind,
    },
    /// Train one model per number of leading FAC blocks.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "crnn-lite")]
        preset: String,
        /// Values of n_FAC (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        n_fac: Vec<usize>,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Independent repetitions with consecutive seeds.
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Compare the fixed, adapt and adapt_dep amplitude strategies.
    Ablation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "crnn-lite")]
        preset: String,
        /// Number of leading FAC blocks.
        #[arg(long, default_value_t = 4)]
        n_fac: usize,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Seeds per mode, starting at --seed.
        #[arg(long, default_value_t = 5)]
        runs: u64,
    },
    /// Parameter and FLOP accounting with FAC overhead.
    Count {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "crnn-conv")]
        preset: String,
        /// Number of leading FAC blocks; defaults to all blocks.
        #[arg(long)]
        n_fac: Option<usize>,
        #[arg(long, default_value = "adapt_dep")]
        fac_mode: String,
    },
    /// Write the frequency encodings of a freshly built FAC model.
    ExportEncodings {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "crnn-conv")]
        preset: String,
        /// Number of leading FAC blocks; defaults to all blocks.
        #[arg(long)]
        n_fac: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gradcheck { .. } => "gradcheck",
            Command::ShiftProbe { .. } => "shift-probe",
            Command::Synth { .. } => "synth",
            Command::Sweep { .. } => "sweep",
            Command::Ablation { .. } => "ablation",
            Command::Count { .. } => "count",
            Command::ExportEncodings { .. } => "export-encodings",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("facnet {name}: error: {e:#}");
            ExitCode::from(2)
        }
    }
}
