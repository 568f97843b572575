//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use facnet::accounting::{
    count_params, fac_flop_overhead, fac_overhead_closed_form, fac_param_overhead, fdy_param_overhead,
};
use facnet::checks::{check_case, LAYER_CASES};
use facnet::experiments::{
    gen_synth, predict_logits, run_ablation, run_nfac_sweep, run_shift_probe, train, write_csv, SynthSpec,
    TrainSpec, ABLATION_MARGIN,
};
use facnet::freq::{frequency_ramp, FaConcatConv, FacMode, FdyConv};
use facnet::layers::{conv2d, ConvSpec, Layer, PaddingMode};
use facnet::model::{build_model, presets};
use facnet::{Result, Rng, Tensor};

const GRAD_STEP: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_SHAPES: usize = 3;

const FAC_OVERHEAD: u64 = 515;
const FAC_PREFIXES: [u64; 7] = [257, 386, 451, 484, 501, 510, 515];

const FDY_REFERENCE: f64 = 8.02e6;
const FDY_RELATIVE_TOLERANCE: f64 = 0.15;
const FAC_FLOP_REFERENCE: f64 = 1.92e6;
/// Order-of-magnitude agreement: within a factor of ten either way.
const FLOP_RATIO_BOUNDS: (f64, f64) = (0.1, 10.0);

const INSTANCES: usize = 100;
const FACONCAT_TOLERANCE: f64 = 1e-12;
const FDY_PATH_TOLERANCE: f64 = 1e-9;

const PROBE_BIN: usize = 19;
const PROBE_SHIFT: isize = 16;
const PROBE_TOLERANCE: f64 = 1e-12;
const FIG1_SHIFT: isize = 10;
const FIG1_EPSILON: f64 = 1e-9;

const PAIRED_LOGIT_TOLERANCE: f64 = 1e-9;
const FAC_SENSITIVITY: f64 = 1e-6;
const SEPARATION_ACCURACY: f64 = 0.95;
const SEPARATION_EPOCHS: usize = 50;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn gradients() -> Result<Outcome> {
    let mut rng = Rng::new(2024);
    let mut worst = (String::new(), 0.0_f64);
    let mut failures = Vec::new();
    for case in LAYER_CASES {
        for report in check_case(case, GRAD_SHAPES, GRAD_STEP, GRAD_TOLERANCE, &mut rng)? {
            if report.max_error() > worst.1 {
                worst = (report.layer.clone(), report.max_error());
            }
            if !report.passed {
                failures.push(report.layer);
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} layer kinds x {GRAD_SHAPES} shapes, worst relative error {:.2e} ({}), failures {failures:?}",
            LAYER_CASES.len(),
            worst.1,
            worst.0
        ),
    )
}

fn fac_overhead() -> Result<Outcome> {
    let config = presets::crnn_conv().with_fac_mode(FacMode::AdaptDep);
    let total = fac_param_overhead(&config, 7)?;
    let mut prefixes = Vec::new();
    let mut closed = Vec::new();
    for n in 1..=7 {
        prefixes.push(fac_param_overhead(&config, n)?);
        closed.push(fac_overhead_closed_form(&config, n, FacMode::AdaptDep)?);
    }
    outcome(
        total == FAC_OVERHEAD && prefixes == FAC_PREFIXES && closed == FAC_PREFIXES,
        format!("n_FAC=7 overhead {total} (expected {FAC_OVERHEAD}), prefixes {prefixes:?}, closed form {closed:?}"),
    )
}

fn fdy_overhead() -> Result<Outcome> {
    let config = presets::crnn_conv();
    let fdy = fdy_param_overhead(&config, 4)?;
    let total = fdy.total() as f64;
    let rel = (total - FDY_REFERENCE) / FDY_REFERENCE;
    let base = count_params(&config)?;
    let conv: u64 = base.params_where(|r| r.name.ends_with(".conv"));
    let gru = base.params_where(|r| r.layer == "gru");
    let (_, t, f) = config.input_shape;
    let flops = fac_flop_overhead(&config, [1, 1, t, f])? as f64;
    let ratio = flops / FAC_FLOP_REFERENCE;
    let flops_ok = ratio >= FLOP_RATIO_BOUNDS.0 && ratio <= FLOP_RATIO_BOUNDS.1;
    let per_block: Vec<String> = fdy
        .per_block
        .iter()
        .map(|(b, k, a)| format!("b{b}:{k}+{a}"))
        .collect();
    outcome(
        rel.abs() <= FDY_RELATIVE_TOLERANCE && flops_ok,
        format!(
            "FDY K=4 overhead {} = 3 extra kernel sets {} + attention {} ({:+.1}% vs 8.02M, tolerance 15%); \
             per block [{}]; gap: vanilla CRNN here has {} params (conv {conv}, GRU {gru}), \
             so a 3.04M baseline cannot hold the same conv stack, and the 8.02M difference mixes baselines; \
             FAC flop overhead {} = {:.2}x of 1.92M (order-of-magnitude check {})",
            fdy.total(),
            fdy.extra_kernels,
            fdy.attention,
            rel * 100.0,
            per_block.join(" "),
            base.total_params(),
            flops as u64,
            ratio,
            if flops_ok { "ok" } else { "failed" }
        ),
    )
}

fn random_spec(rng: &mut Rng, padding: PaddingMode) -> (ConvSpec, [usize; 4]) {
    let kernel = (1 + 2 * rng.below(2), 1 + 2 * rng.below(3));
    let spec = ConvSpec::new(1 + rng.below(3), 1 + rng.below(3), kernel)
        .with_padding(padding)
        .with_bias(rng.below(2) == 0);
    let shape = [1 + rng.below(2), spec.in_channels, 2 + rng.below(4), 4 + rng.below(8)];
    (spec, shape)
}

fn faconcat_decomposition() -> Result<Outcome> {
    let mut rng = Rng::new(4);
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let padding = if i % 2 == 0 { PaddingMode::Zero } else { PaddingMode::CircularFrequency };
        let (spec, shape) = random_spec(&mut rng, padding);
        let mut layer = FaConcatConv::new(spec, &mut rng)?;
        let x = Tensor::rand_uniform(shape, -1.0, 1.0, &mut rng)?;
        let y = layer.forward(&x)?;

        let (cin, kk) = (spec.in_channels, spec.kernel.0 * spec.kernel.1);
        let w = &layer.conv.weight.value;
        let mut k1 = Vec::new();
        let mut k2 = Vec::new();
        for o in 0..spec.out_channels {
            let row = &w[o * (cin + 1) * kk..(o + 1) * (cin + 1) * kk];
            k1.extend_from_slice(&row[..cin * kk]);
            k2.extend_from_slice(&row[cin * kk..]);
        }
        let [n, _, t, f] = shape;
        let ramp = frequency_ramp(f);
        let v = Tensor::new([n, 1, t, f], (0..n * t).flat_map(|_| ramp.clone()).collect())?;
        let bias = layer.conv.bias.as_ref().map(|b| b.value.clone());
        let mut oracle = conv2d(&x, &spec, &k1, bias.as_deref())?;
        let ramp_spec = ConvSpec {
            in_channels: 1,
            bias: false,
            ..spec
        };
        oracle.add_assign(&conv2d(&v, &ramp_spec, &k2, None)?)?;
        worst = worst.max(y.max_abs_diff(&oracle)?);
    }
    outcome(
        worst <= FACONCAT_TOLERANCE,
        format!("{INSTANCES} instances, max |FAConcat - (conv(X,k1) + conv(V,k2))| = {worst:.2e}"),
    )
}

fn fdy_two_paths() -> Result<Outcome> {
    let mut rng = Rng::new(5);
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        let basis = [1, 2, 4][i % 3];
        let padding = if i % 2 == 0 { PaddingMode::Zero } else { PaddingMode::CircularFrequency };
        let (spec, shape) = random_spec(&mut rng, padding);
        let mut layer = FdyConv::new(spec, basis, &mut rng)?;
        for v in layer.attn_w.value.iter_mut().chain(layer.attn_b.value.iter_mut()) {
            *v = rng.uniform(-1.0, 1.0);
        }
        let x = Tensor::rand_uniform(shape, -1.0, 1.0, &mut rng)?;
        let weighted = layer.forward(&x)?;
        let combined = layer.forward_combined(&x)?;
        worst = worst.max(weighted.max_abs_diff(&combined)?);
    }
    outcome(
        worst <= FDY_PATH_TOLERANCE,
        format!("{INSTANCES} instances, K in {{1,2,4}}, max |weighted-output - combined-kernel| = {worst:.2e}"),
    )
}

fn shift_theorem() -> Result<Outcome> {
    let circular = presets::fig1_probe().with_padding(PaddingMode::CircularFrequency);
    let mut model = build_model(&circular, &mut Rng::new(42))?;
    let exact = run_shift_probe(&mut model, PROBE_BIN, &[PROBE_SHIFT], PROBE_TOLERANCE)?;
    let pooled = exact.rows[0].pooled_difference;

    let mut zero = build_model(&presets::fig1_probe(), &mut Rng::new(42))?;
    let fig1 = run_shift_probe(&mut zero, PROBE_BIN, &[0, FIG1_SHIFT], FIG1_EPSILON)?;
    let demo = fig1.rows[1];
    outcome(
        pooled <= PROBE_TOLERANCE,
        format!(
            "circular padding, bins {PROBE_BIN} vs {}: pooled difference {pooled:.2e}; \
             zero padding shift {FIG1_SHIFT} (not asserted): raw {:.3e}, pooled {:.3e}, tolerated_shift {:?}",
            PROBE_BIN as isize + PROBE_SHIFT,
            demo.raw_difference,
            demo.pooled_difference,
            fig1.tolerated_shift
        ),
    )
}

fn paired_difference(logits: &Tensor) -> f64 {
    let k = logits.channels();
    logits
        .data()
        .chunks_exact(2 * k)
        .flat_map(|pair| (0..k).map(move |j| (pair[j] - pair[k + j]).abs()))
        .fold(0.0, f64::max)
}

fn paired_norm_min(logits: &Tensor) -> f64 {
    let k = logits.channels();
    logits
        .data()
        .chunks_exact(2 * k)
        .map(|pair| (0..k).map(|j| (pair[j] - pair[k + j]).powi(2)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn separation() -> Result<Outcome> {
    let data = gen_synth(&SynthSpec::default())?;
    let lite = presets::crnn_lite();
    let mut vanilla_diff: f64 = 0.0;
    let mut vanilla_acc = Vec::new();
    let mut fac_init_norm = f64::INFINITY;
    let mut fac_acc = Vec::new();
    let mut fac_first = Vec::new();
    for seed in SEEDS {
        let spec = TrainSpec {
            epochs: SEPARATION_EPOCHS,
            seed,
            ..TrainSpec::default()
        };
        let mut vanilla = build_model(&lite, &mut Rng::new(seed))?;
        vanilla_diff = vanilla_diff.max(paired_difference(&predict_logits(&mut vanilla, &data.test.x)?));
        let history = train(&mut vanilla, &data.train, &data.test, &spec)?;
        vanilla_diff = vanilla_diff.max(paired_difference(&predict_logits(&mut vanilla, &data.test.x)?));
        vanilla_acc.push(history.last().expect("epochs").test_accuracy);

        for n in 1..=lite.blocks.len() {
            let mut fac = build_model(&lite.with_n_fac(n)?, &mut Rng::new(seed))?;
            fac_init_norm = fac_init_norm.min(paired_norm_min(&predict_logits(&mut fac, &data.test.x)?));
            let history = train(&mut fac, &data.train, &data.test, &spec)?;
            fac_acc.push((n, seed, history.last().expect("epochs").test_accuracy));
            fac_first.push(history.iter().find(|r| r.test_accuracy >= SEPARATION_ACCURACY).map(|r| r.epoch));
        }
    }
    let min_fac = fac_acc.iter().map(|a| a.2).fold(1.0, f64::min);
    let slowest = fac_first.iter().map(|e| e.unwrap_or(usize::MAX)).max().unwrap_or(0);
    let passed = vanilla_diff <= PAIRED_LOGIT_TOLERANCE
        && fac_init_norm > FAC_SENSITIVITY
        && fac_acc.iter().all(|a| a.2 >= SEPARATION_ACCURACY);
    outcome(
        passed,
        format!(
            "vanilla paired-logit max difference {vanilla_diff:.2e} (before and after training), accuracy {vanilla_acc:?}; \
             FAC init paired-logit norm >= {fac_init_norm:.2e}; FAC n_FAC=1..4 x 5 seeds: min accuracy at epoch {SEPARATION_EPOCHS} {min_fac:.3}, \
             slowest run reaches {SEPARATION_ACCURACY} at epoch {slowest}"
        ),
    )
}

fn ablation() -> Result<Outcome> {
    let spec = SynthSpec::ablation();
    let data = gen_synth(&spec)?;
    let config = presets::crnn_lite()
        .with_input_shape((spec.channels, spec.time, spec.freq))
        .with_n_fac(4)?;
    let result = run_ablation(&config, &FacMode::ALL, &SEEDS, &data, &TrainSpec::ablation())?;
    let parts: Vec<String> = result
        .summary
        .iter()
        .map(|s| format!("{} {:.3} +/- {:.3}", s.mode, s.mean_accuracy, s.std_accuracy))
        .collect();
    let gap = result.mean(FacMode::AdaptDep).unwrap_or(0.0) - result.mean(FacMode::Fixed).unwrap_or(0.0);
    outcome(
        result.ordering_holds(ABLATION_MARGIN),
        format!("{}; adapt_dep - fixed = {gap:.3} (margin {ABLATION_MARGIN})", parts.join(", ")),
    )
}

fn csv<T: serde::Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(buf)
}

fn all_outputs() -> Result<Vec<(&'static str, Vec<u8>)>> {
    let mut out = Vec::new();
    let mut probe = build_model(&presets::fig1_probe(), &mut Rng::new(42))?;
    out.push(("shift_probe", csv(&run_shift_probe(&mut probe, 19, &[0, 10, 16], 1e-9)?.rows)?));
    let mut counts = Vec::new();
    count_params(&presets::crnn_conv().with_n_fac(7)?)?.write_csv(&mut counts)?;
    out.push(("count", counts));
    let data = gen_synth(&SynthSpec {
        n_train: 20,
        n_test: 10,
        ..SynthSpec::default()
    })?;
    let spec = TrainSpec {
        epochs: 3,
        ..TrainSpec::default()
    };
    out.push(("sweep", csv(&run_nfac_sweep(&presets::crnn_lite(), &[0, 1, 4], &data, &spec)?)?));
    let config = presets::crnn_lite().with_n_fac(2)?;
    let result = run_ablation(&config, &FacMode::ALL, &[7], &data, &spec)?;
    out.push(("ablation_runs", csv(&result.runs)?));
    out.push(("ablation_summary", csv(&result.summary)?));
    let mut rng = Rng::new(42);
    let grads: Vec<(String, f64)> = check_case("fac_adapt_dep", 2, GRAD_STEP, GRAD_TOLERANCE, &mut rng)?
        .into_iter()
        .map(|r| (r.layer.clone(), r.max_error()))
        .collect();
    out.push(("gradcheck", csv(&grads)?));
    Ok(out)
}

fn determinism() -> Result<Outcome> {
    let first = all_outputs()?;
    let second = all_outputs()?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0)
        .collect();
    let bytes: usize = first.iter().map(|f| f.1.len()).sum();
    outcome(
        differing.is_empty(),
        format!("{} CSV outputs ({bytes} bytes) regenerated, differing: {differing:?}", first.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 9] = [
        ("gradient correctness", gradients),
        ("FAC parameter overhead", fac_overhead),
        ("FDY parameter overhead", fdy_overhead),
        ("FAConcat decomposition", faconcat_decomposition),
        ("FDY two-path equivalence", fdy_two_paths),
        ("shift insensitivity", shift_theorem),
        ("synthetic separation", separation),
        ("ablation direction", ablation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {} [{}] {name} ({:.1}s): {detail}",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
