use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use facnet::accounting::{count_params, fac_flop_overhead, fac_param_overhead, fdy_param_overhead};
use facnet::checks::{check_case, LAYER_CASES};
use facnet::experiments::{
    csv_file_name, gen_synth, run_ablation, run_nfac_sweep, run_shift_probe, write_csv, SynthSpec,
    TrainSpec, ABLATION_MARGIN,
};
use facnet::freq::FacMode;
use facnet::gradcheck::{DEFAULT_STEP, DEFAULT_TOLERANCE};
use facnet::layers::PaddingMode;
use facnet::model::{build_model, export_encodings, presets, write_encodings_csv, ModelConfig};
use facnet::Rng;

use crate::output::Output;
use crate::{Command, Common, DatasetKind, Padding, SEED_ENV};

/// Runs one subcommand. `Ok(false)` means a check ran and failed.
pub fn run(command: Command) -> Result<bool> {
    match command {
        Command::Gradcheck { common, layers, shapes } => gradcheck(&common, layers, shapes),
        Command::ShiftProbe {
            common,
            preset,
            padding,
            base_bin,
            index_base,
            shifts,
            epsilon,
        } => shift_probe(&common, &preset, padding, base_bin, index_base, &shifts, epsilon),
        Command::Synth { common, dataset } => synth(&common, dataset),
        Command::Sweep {
            common,
            preset,
            n_fac,
            epochs,
            runs,
        } => sweep(&common, &preset, &n_fac, epochs, runs),
        Command::Ablation {
            common,
            preset,
            n_fac,
            epochs,
            runs,
        } => ablation(&common, &preset, n_fac, epochs, runs),
        Command::Count {
            common,
            preset,
            n_fac,
            fac_mode,
        } => count(&common, &preset, n_fac, &fac_mode),
        Command::ExportEncodings { common, preset, n_fac } => encodings(&common, &preset, n_fac),
    }
}

fn resolve_seed(common: &Common) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}='{v}' is not a non-negative integer")),
        Err(_) => Ok(common.seed),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn model_config(common: &Common, preset: &str) -> Result<ModelConfig> {
    let config = match &common.config {
        Some(path) => read_json::<ModelConfig>(path)?,
        None => presets::preset(preset)?,
    };
    config.validate()?;
    Ok(config)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(buf)
}

fn report_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradcheckConfig {
    layers: Option<Vec<String>>,
    shapes: Option<usize>,
}

#[derive(Serialize)]
struct GradcheckRow {
    layer: String,
    shape: String,
    input_error: f64,
    max_error: f64,
    passed: bool,
}

fn gradcheck(common: &Common, layers: Vec<String>, shapes: usize) -> Result<bool> {
    let seed = resolve_seed(common)?;
    let file = csv_file_name("gradcheck", seed);
    let mut out = Output::new(&common.out, common.force, &[&file])?;
    let config = match &common.config {
        Some(path) => read_json::<GradcheckConfig>(path)?,
        None => GradcheckConfig::default(),
    };
    let cases: Vec<String> = match (config.layers, layers.is_empty()) {
        (_, false) => layers,
        (Some(l), true) => l,
        (None, true) => LAYER_CASES.iter().map(|s| s.to_string()).collect(),
    };
    let shapes = config.shapes.unwrap_or(shapes);
    if shapes == 0 || cases.is_empty() {
        bail!("need at least one layer case and one shape");
    }
    let mut rng = Rng::new(seed);
    let mut rows = Vec::new();
    let mut passing = 0;
    for case in &cases {
        let reports = check_case(case, shapes, DEFAULT_STEP, DEFAULT_TOLERANCE, &mut rng)?;
        let worst = reports.iter().map(|r| r.max_error()).fold(0.0, f64::max);
        let passed = reports.iter().all(|r| r.passed);
        passing += usize::from(passed);
        println!(
            "{case:<16} max relative error {worst:.3e} over {shapes} shapes {}",
            if passed { "ok" } else { "FAIL" }
        );
        for r in reports {
            let shape = r.layer.split_once(' ').map(|(_, s)| s.to_string()).unwrap_or_default();
            rows.push(GradcheckRow {
                layer: case.clone(),
                shape,
                input_error: r.input_error,
                max_error: r.max_error(),
                passed: r.passed,
            });
        }
    }
    out.add(file, csv_bytes(&rows)?);
    report_written(&out.commit()?);
    println!(
        "gradcheck: {passing} of {} layer cases pass at tolerance {DEFAULT_TOLERANCE:e}",
        cases.len()
    );
    Ok(passing == cases.len())
}

#[allow(clippy::too_many_arguments)]
fn shift_probe(
    common: &Common,
    preset: &str,
    padding: Option<Padding>,
    base_bin: usize,
    index_base: u8,
    shifts: &[isize],
    epsilon: f64,
) -> Result<bool> {
    let seed = resolve_seed(common)?;
    let file = csv_file_name("shift_probe", seed);
    let mut out = Output::new(&common.out, common.force, &[&file])?;
    let mut config = model_config(common, preset)?;
    if let Some(p) = padding {
        config = config.with_padding(match p {
            Padding::Zero => PaddingMode::Zero,
            Padding::Circular => PaddingMode::CircularFrequency,
        });
    }
    let Some(bin) = base_bin.checked_sub(index_base as usize) else {
        bail!("--base-bin {base_bin} is below --index-base {index_base}");
    };
    let mut model = build_model(&config, &mut Rng::new(seed))?;
    let result = run_shift_probe(&mut model, bin, shifts, epsilon)?;
    out.add(file, csv_bytes(&result.rows)?);
    report_written(&out.commit()?);
    let tolerated = result
        .tolerated_shift
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    println!(
        "shift-probe: base bin {base_bin} (index base {index_base}), {} shifts, tolerated shift {tolerated} at epsilon {epsilon:e}",
        shifts.len()
    );
    Ok(true)
}

fn synth(common: &Common, dataset: DatasetKind) -> Result<bool> {
    #[derive(Serialize)]
    struct Row {
        split: &'static str,
        index: usize,
        label: usize,
        jitter: isize,
        amplitude: f64,
        mean: f64,
    }
    let seed = resolve_seed(common)?;
    let file = csv_file_name("synth", seed);
    let mut out = Output::new(&common.out, common.force, &[&file])?;
    let mut spec = match (&common.config, dataset) {
        (Some(path), _) => read_json::<SynthSpec>(path)?,
        (None, DatasetKind::Separation) => SynthSpec::default(),
        (None, DatasetKind::Ablation) => SynthSpec::ablation(),
    };
    spec.seed = seed;
    let data = gen_synth(&spec)?;
    let mut rows = Vec::new();
    for (split, set) in [("train", &data.train), ("test", &data.test)] {
        let item = set.x.len() / set.len();
        for (i, info) in set.info.iter().enumerate() {
            let values = &set.x.data()[i * item..(i + 1) * item];
            rows.push(Row {
                split,
                index: i,
                label: info.label,
                jitter: info.jitter,
                amplitude: info.amplitude,
                mean: values.iter().sum::<f64>() / item as f64,
            });
        }
    }
    out.add(file, csv_bytes(&rows)?);
    report_written(&out.commit()?);
    println!(
        "synth: {} train / {} test samples of shape {:?}, class shift {} bins",
        data.train.len(),
        data.test.len(),
        &data.train.x.shape()[1..],
        spec.class_shift()
    );
    Ok(true)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    model: Option<ModelConfig>,
    synth: Option<SynthSpec>,
    train: Option<TrainSpec>,
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => read_json(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn sweep(common: &Common, preset: &str, n_values: &[usize], epochs: Option<usize>, runs: u64) -> Result<bool> {
    let seed = resolve_seed(common)?;
    let file = csv_file_name("sweep", seed);
    let mut out = Output::new(&common.out, common.force, &[&file])?;
    let exp = experiment_config(common)?;
    let base = match exp.model {
        Some(m) => m,
        None => presets::preset(preset)?,
    };
    let spec = SynthSpec {
        seed,
        ..exp.synth.unwrap_or_default()
    };
    let base = base.with_input_shape((spec.channels, spec.time, spec.freq));
    let mut train = exp.train.unwrap_or_default();
    if let Some(e) = epochs {
        train.epochs = e;
    }
    if runs == 0 || n_values.is_empty() {
        bail!("need at least one run and one n_FAC value");
    }
    let data = gen_synth(&spec)?;
    let mut rows = Vec::new();
    for r in 0..runs {
        let run_spec = TrainSpec {
            seed: seed + r * n_values.len() as u64,
            ..train
        };
        rows.extend(run_nfac_sweep(&base, n_values, &data, &run_spec)?);
    }
    out.add(file, csv_bytes(&rows)?);
    report_written(&out.commit()?);
    let summary: Vec<String> = n_values
        .iter()
        .map(|&n| {
            let acc: Vec<f64> = rows.iter().filter(|r| r.n_fac == n).map(|r| r.test_accuracy).collect();
            format!("n_fac={n}: {:.3}", acc.iter().sum::<f64>() / acc.len() as f64)
        })
        .collect();
    println!("sweep: mean test accuracy {}", summary.join(", "));
    Ok(true)
}

fn ablation(common: &Common, preset: &str, n_fac: usize, epochs: Option<usize>, runs: u64) -> Result<bool> {
    let seed = resolve_seed(common)?;
    let runs_file = csv_file_name("ablation_runs", seed);
    let summary_file = csv_file_name("ablation_summary", seed);
    let mut out = Output::new(&common.out, common.force, &[&runs_file, &summary_file])?;
    let exp = experiment_config(common)?;
    let base = match exp.model {
        Some(m) => m,
        None => presets::preset(preset)?,
    };
    let spec = SynthSpec {
        seed,
        ..exp.synth.unwrap_or_else(SynthSpec::ablation)
    };
    let config = base
        .with_input_shape((spec.channels, spec.time, spec.freq))
        .with_n_fac(n_fac)?;
    let mut train = exp.train.unwrap_or_else(TrainSpec::ablation);
    if let Some(e) = epochs {
        train.epochs = e;
    }
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let seeds: Vec<u64> = (seed..seed + runs).collect();
    let data = gen_synth(&spec)?;
    let result = run_ablation(&config, &FacMode::ALL, &seeds, &data, &train)?;
    out.add(runs_file, csv_bytes(&result.runs)?);
    out.add(summary_file, csv_bytes(&result.summary)?);
    report_written(&out.commit()?);
    let parts: Vec<String> = result
        .summary
        .iter()
        .map(|s| format!("{} {:.3} +/- {:.3}", s.mode, s.mean_accuracy, s.std_accuracy))
        .collect();
    let holds = result.ordering_holds(ABLATION_MARGIN);
    println!(
        "ablation: {}; adapt_dep >= adapt >= fixed with margin {ABLATION_MARGIN}: {}",
        parts.join(", "),
        if holds { "yes" } else { "no" }
    );
    Ok(holds)
}

fn count(common: &Common, preset: &str, n_fac: Option<usize>, fac_mode: &str) -> Result<bool> {
    #[derive(Serialize)]
    struct Overhead {
        quantity: &'static str,
        value: u64,
    }
    let seed = resolve_seed(common)?;
    let file = csv_file_name("count", seed);
    let overhead_file = csv_file_name("count_overhead", seed);
    let mut out = Output::new(&common.out, common.force, &[&file, &overhead_file])?;
    let mode: FacMode = fac_mode.parse()?;
    let base = model_config(common, preset)?.with_fac_mode(mode);
    let n = n_fac.unwrap_or(base.blocks.len());
    let fac_config = base.with_n_fac(n)?;
    let report = count_params(&fac_config)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    out.add(file, buf);
    let (c, t, f) = base.input_shape;
    let param_overhead = fac_param_overhead(&base, n)?;
    let overhead = [
        Overhead {
            quantity: "fac_params",
            value: param_overhead,
        },
        Overhead {
            quantity: "fac_flops_all_blocks",
            value: fac_flop_overhead(&base, [1, c, t, f])?,
        },
        Overhead {
            quantity: "fdy_params_k4",
            value: fdy_param_overhead(&base, 4)?.total(),
        },
        Overhead {
            quantity: "total_params",
            value: report.total_params(),
        },
    ];
    out.add(overhead_file, csv_bytes(&overhead)?);
    report_written(&out.commit()?);
    println!("FAC overhead: {param_overhead} params");
    Ok(true)
}

fn encodings(common: &Common, preset: &str, n_fac: Option<usize>) -> Result<bool> {
    let seed = resolve_seed(common)?;
    let file = csv_file_name("encodings", seed);
    let mut out = Output::new(&common.out, common.force, &[&file])?;
    let base = model_config(common, preset)?;
    let config = base.with_n_fac(n_fac.unwrap_or(base.blocks.len()))?;
    let model = build_model(&config, &mut Rng::new(seed))?;
    let rows = export_encodings(&model)?;
    let mut buf = Vec::new();
    write_encodings_csv(&rows, &mut buf)?;
    out.add(file, buf);
    report_written(&out.commit()?);
    println!("export-encodings: {} FAC blocks", rows.len());
    Ok(true)
}
