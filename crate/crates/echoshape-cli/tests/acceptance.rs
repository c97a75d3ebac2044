//! Acceptance suite for the whole workbench. Each criterion prints exactly
//! one PASS/FAIL line on stdout; the process exits nonzero if any fail.
//!
//! The heavy criteria share artifacts: the trained low-frequency model from
//! criterion 5 is reused by 6 and 9, so those report a prerequisite failure
//! if training never succeeded. Progress goes to stderr, results to stdout.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use echoshape::forward::{
    frechet_matrix, mie_circle, solve_forward, Aperture, ScatterConfig,
};
use echoshape::geometry::StarCoeffs;
use echoshape::inverse_classical::{gauss_newton, GnParams};
use echoshape::linalg::Mat;
use echoshape::neural::{self, CnnArch, CnnModel, PadMode, TrainConfig, TrainingSet};
use echoshape::rng;
use echoshape_cli::bench::{self, relative_error, BenchmarkParams};
use echoshape_cli::dataset::{self, sample_coeffs};
use echoshape_cli::presets;
use echoshape_cli::studies::{self, ScalingOptions};
use num_complex::Complex64;

fn main() {
    env_logger::init();
    let mut results: Vec<(&'static str, bool)> = Vec::new();
    let model_slot: RefCell<Option<CnnModel>> = RefCell::new(None);

    run_criterion("1", &mut results, forward_oracle);
    run_criterion("2", &mut results, frechet_consistency);
    run_criterion("3", &mut results, frechet_decay_profile);
    run_criterion("4", &mut results, nn_gradient_oracle);
    run_criterion("5", &mut results, || low_frequency_benchmark(&model_slot));
    run_criterion("6", &mut results, || noise_robustness(&model_slot));
    run_criterion("7", &mut results, half_aperture);
    run_criterion("8a", &mut results, high_frequency_smoke);
    run_criterion("8b", &mut results, scaling_thresholds);
    run_criterion("9", &mut results, || benchmark_determinism(&model_slot));

    let failed: Vec<&str> = results.iter().filter(|(_, ok)| !ok).map(|(id, _)| *id).collect();
    if failed.is_empty() {
        println!("acceptance summary: all {} criteria passed", results.len());
    } else {
        println!(
            "acceptance summary: {}/{} criteria failed: {}",
            failed.len(),
            results.len(),
            failed.join(", ")
        );
        std::process::exit(1);
    }
}

fn run_criterion(
    id: &'static str,
    results: &mut Vec<(&'static str, bool)>,
    body: impl FnOnce() -> Result<String, String>,
) {
    eprintln!("acceptance {id}: running");
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(Ok(detail)) => (true, detail),
        Ok(Err(detail)) => (false, detail),
        Err(payload) => (false, format!("panicked: {}", panic_text(&payload))),
    };
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("acceptance {id}: {verdict} - {detail} [{elapsed:.1}s]");
    results.push((id, ok));
}

fn panic_text(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "opaque panic payload".to_string()
    }
}

fn err_str(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Criterion 1: the solver reproduces the series solution for a unit circle
/// at three wavenumbers, quickly.
fn forward_oracle() -> Result<String, String> {
    let mut detail = String::new();
    for k in [1.0, 5.0, 10.0] {
        let cfg = ScatterConfig::full(k, 64, 64);
        let circle = StarCoeffs::unit_circle(0);
        let start = Instant::now();
        let (u, _) = solve_forward(&circle, &cfg).map_err(err_str)?;
        let secs = start.elapsed().as_secs_f64();
        let series = mie_circle(1.0, k, &cfg).map_err(err_str)?;
        let err = u.max_abs_diff(&series);
        if !(err < 1e-8) {
            return Err(format!("k={k}: max abs error {err:.3e}, need < 1e-8"));
        }
        if !(secs < 2.0) {
            return Err(format!("k={k}: solve took {secs:.2}s, need < 2s"));
        }
        let _ = write!(detail, "k={k}: {err:.1e} in {secs:.2}s; ");
    }
    Ok(detail.trim_end_matches("; ").to_string())
}

/// Criterion 2: analytic Jacobian columns agree with central finite
/// differences on random shapes.
fn frechet_consistency() -> Result<String, String> {
    let cfg = ScatterConfig::full(5.0, 24, 24);
    let mut shapes = rng::stream(202, "acceptance-frechet");
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let c = sample_coeffs(5, &mut shapes).map_err(err_str)?;
        let (_, psi) = solve_forward(&c, &cfg).map_err(err_str)?;
        let jac = frechet_matrix(&c, &cfg, &psi).map_err(err_str)?;
        for col in 0..c.coeffs().len() {
            let mut plus = c.coeffs().to_vec();
            plus[col] += h;
            let mut minus = c.coeffs().to_vec();
            minus[col] -= h;
            let (up, _) = solve_forward(&StarCoeffs::new(plus).map_err(err_str)?, &cfg)
                .map_err(err_str)?;
            let (um, _) = solve_forward(&StarCoeffs::new(minus).map_err(err_str)?, &cfg)
                .map_err(err_str)?;
            let up = up.stacked();
            let um = um.stacked();
            let mut diff2 = 0.0;
            let mut fd2 = 0.0;
            for (row, (a, b)) in up.iter().zip(&um).enumerate() {
                let fd = (a - b) / Complex64::new(2.0 * h, 0.0);
                diff2 += (jac.0.at(row, col) - fd).norm_sqr();
                fd2 += fd.norm_sqr();
            }
            let rel = (diff2 / fd2).sqrt();
            worst = worst.max(rel);
            if !(rel < 1e-4) {
                return Err(format!("column {col}: relative error {rel:.3e}, need < 1e-4"));
            }
        }
    }
    Ok(format!("10 shapes x 11 columns, worst relative error {worst:.1e}"))
}

/// Criterion 3: the normalized Jacobian column magnitudes stay flat through
/// the propagating modes and decay past the wavenumber.
fn frechet_decay_profile() -> Result<String, String> {
    let norms = studies::frechet_decay(7.5, 35, 200, 200).map_err(err_str)?;
    for (i, v) in norms.iter().enumerate() {
        let j = i + 1;
        if j <= 8 && !(*v >= 0.1) {
            return Err(format!("mode {j}: scaled magnitude {v:.3e}, need >= 0.1"));
        }
        if j >= 30 && !(*v < 1e-2) {
            return Err(format!("mode {j}: scaled magnitude {v:.3e}, need < 1e-2"));
        }
    }
    let peak = norms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    for i in (peak + 1)..norms.len() {
        if !(norms[i] <= norms[i - 1] * 1.05) {
            return Err(format!(
                "non-monotone beyond the peak at mode {}: {:.3e} after {:.3e}",
                i + 1,
                norms[i],
                norms[i - 1]
            ));
        }
    }
    Ok(format!(
        "35 modes, peak at mode {}, tail magnitude {:.1e}",
        peak + 1,
        norms[norms.len() - 1]
    ))
}

/// Criterion 4: backprop agrees with central finite differences over the
/// full parameter vector on randomly drawn small architectures.
fn nn_gradient_oracle() -> Result<String, String> {
    let mut rng = rng::stream(404, "acceptance-gradcheck");
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for trial in 0..20 {
        let arch = CnnArch {
            n_t: [4, 8][rng::index(&mut rng, 2)],
            n_d: [4, 8][rng::index(&mut rng, 2)],
            m: 1 + rng::index(&mut rng, 2),
            n_c: 1 + rng::index(&mut rng, 2),
            p: 1 + rng::index(&mut rng, 2),
            n1: 4 + rng::index(&mut rng, 5),
            n2: 3 + rng::index(&mut rng, 4),
            pad_mode: [PadMode::Periodic, PadMode::Zero][rng::index(&mut rng, 2)],
        };
        arch.validate().map_err(err_str)?;
        let out_len = 2 * arch.m + 1;

        // one-sample set, zero epochs: a freshly initialized model
        let sample = Mat::from_fn(arch.n_t, arch.n_d, |_, _| rng::uniform(&mut rng, -1.0, 1.0));
        let target: Vec<f64> = (0..out_len).map(|_| rng::uniform(&mut rng, -0.5, 0.5)).collect();
        let set = TrainingSet::from_raw(&[sample], vec![target.clone()]).map_err(err_str)?;
        let tc = TrainConfig { n_epoch: 0, seed: 1 + trial as u64, ..TrainConfig::default() };
        let mut model = neural::train(&set, &arch, &tc).map_err(err_str)?;

        // inputs too close to a ReLU kink make the finite difference lie
        let mut input = Mat::from_fn(arch.n_t, arch.n_d, |_, _| rng::uniform(&mut rng, -1.0, 1.0));
        for _ in 0..50 {
            if neural::activation_margin(&model, &input).map_err(err_str)? > 1e-4 {
                break;
            }
            input = Mat::from_fn(arch.n_t, arch.n_d, |_, _| rng::uniform(&mut rng, -1.0, 1.0));
        }

        let analytic = neural::backprop(&model, &input, &target).map_err(err_str)?;
        let loss = |m: &CnnModel| -> Result<f64, String> {
            let out = neural::cnn_forward(m, &input).map_err(err_str)?;
            Ok(0.5 * out.iter().zip(&target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>())
        };
        let mut diff2 = 0.0;
        let mut fd2 = 0.0;
        for i in 0..model.parameter_count() {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let lp = loss(&model)?;
            model.params_mut()[i] = orig - h;
            let lm = loss(&model)?;
            model.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            diff2 += (analytic[i] - fd) * (analytic[i] - fd);
            fd2 += fd * fd;
        }
        let rel = (diff2 / fd2.max(1e-300)).sqrt();
        worst = worst.max(rel);
        if !(rel < 1e-5) {
            return Err(format!(
                "trial {trial} ({}x{} c{} p{}): gradient error {rel:.3e}, need < 1e-5",
                arch.n_t, arch.n_d, arch.n_c, arch.p
            ));
        }
    }
    Ok(format!("20 architectures, worst relative error {worst:.1e}"))
}

/// Criterion 5: the full low-frequency pipeline hits the published quality
/// bands, and training stays within the time budget.
fn low_frequency_benchmark(slot: &RefCell<Option<CnnModel>>) -> Result<String, String> {
    let pre = presets::preset(5);
    let cfg = ScatterConfig::full(5.0, pre.n_t, pre.n_d);
    eprintln!("  generating {} training samples", pre.n_train);
    let data = dataset::generate(&cfg, 5, pre.n_train, 101).map_err(err_str)?;
    let set = data.training_set().map_err(err_str)?;
    let arch = presets::arch_for(5, pre.n_t, pre.n_d, Aperture::Full);
    let tc = TrainConfig {
        n_epoch: pre.n_epoch,
        batch_size: 100,
        seed: 7,
        ..TrainConfig::default()
    };
    eprintln!("  training for {} epochs", tc.n_epoch);
    let start = Instant::now();
    let model = neural::train(&set, &arch, &tc).map_err(err_str)?;
    let train_secs = start.elapsed().as_secs_f64();
    if !(train_secs <= 3600.0) {
        return Err(format!("training took {train_secs:.0}s, budget is 3600s"));
    }

    eprintln!("  benchmarking 50 fresh shapes (training took {train_secs:.0}s)");
    let params = BenchmarkParams { n_cases: 50, seed: 4242, ..BenchmarkParams::new(5.0, 5) };
    let report = bench::benchmark(&params, &model).map_err(err_str)?;
    *slot.borrow_mut() = Some(model);

    // method order: GN, LSM prediction, LSM refined, DL prediction, DL refined
    let dl_pred = report.mean_relative_error[3];
    let dl_ref = report.mean_relative_error[4];
    let dl_ref_frac = report.fraction_below_one_percent[4];
    let lsm_pred = report.mean_relative_error[1];
    let gn_frac = report.fraction_below_one_percent[0];
    let mut fails = Vec::new();
    if !(dl_pred <= 0.10) {
        fails.push(format!("DL prediction mean {dl_pred:.3e} > 0.10"));
    }
    if !(dl_ref < 1e-4) {
        fails.push(format!("DL refined mean {dl_ref:.3e} >= 1e-4"));
    }
    if !(dl_ref_frac >= 0.9) {
        fails.push(format!("DL refined fraction below 1% is {dl_ref_frac:.2} < 0.9"));
    }
    if !(lsm_pred <= 0.06) {
        fails.push(format!("LSM prediction mean {lsm_pred:.3e} > 0.06"));
    }
    // At this frequency a correct plain Gauss-Newton converges from the unit
    // disk on essentially every shape in the test distribution; its cold-start
    // fragility only sets in at higher wavenumbers (see the README results).
    // The gate protects the baseline against regressions in the Jacobian or
    // the least-squares step, which crater this fraction immediately.
    if !(gn_frac >= 0.9) {
        fails.push(format!("GN fraction below 1% is {gn_frac:.2}, need >= 0.9"));
    }
    if !fails.is_empty() {
        return Err(fails.join("; "));
    }
    Ok(format!(
        "train {train_secs:.0}s; DL pred {dl_pred:.1e}, DL refined {dl_ref:.1e} \
         (frac {dl_ref_frac:.2}), LSM pred {lsm_pred:.1e}, GN frac {gn_frac:.2}"
    ))
}

/// Criterion 6: multiplicative 5% noise barely moves the refined warm-start
/// answer; the model was trained on clean data.
fn noise_robustness(slot: &RefCell<Option<CnnModel>>) -> Result<String, String> {
    let borrowed = slot.borrow();
    let model = borrowed.as_ref().ok_or("prerequisite model unavailable (criterion 5 failed)")?;
    let cfg = ScatterConfig::full(5.0, model.arch.n_t, model.arch.n_d);
    let gn = GnParams::default();
    let mut shapes = rng::stream(616, "acceptance-noise-shapes");
    let mut errs = Vec::with_capacity(50);
    for case in 0..50 {
        let truth = sample_coeffs(5, &mut shapes).map_err(err_str)?;
        let (clean, _) = solve_forward(&truth, &cfg).map_err(err_str)?;
        let mut noise = rng::stream(616, &format!("noise-case-{case}"));
        let noisy = dataset::add_noise(&clean, 0.05, &mut noise);
        let err = (|| -> Result<f64, String> {
            let guess = neural::predict(model, &noisy).map_err(err_str)?;
            let refined = gauss_newton(&noisy, &cfg, &guess, &gn).map_err(err_str)?;
            relative_error(&refined.c_final, &truth).map_err(err_str)
        })()
        .unwrap_or(1.0);
        errs.push(err);
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    if !(mean <= 0.01) {
        return Err(format!("DL refined mean error {mean:.3e} under 5% noise, need <= 0.01"));
    }
    Ok(format!("50 noisy cases, DL refined mean error {mean:.1e}"))
}

/// Criterion 7: the half-aperture pipeline trains with zero padding and
/// still refines to a usable boundary.
fn half_aperture() -> Result<String, String> {
    let pre = presets::preset(5);
    let cfg48 = ScatterConfig::half(5.0, pre.n_t, pre.n_d);
    eprintln!("  generating {} half-aperture samples", pre.n_train);
    let data = dataset::generate(&cfg48, 5, pre.n_train, 303).map_err(err_str)?;
    let set = data.training_set().map_err(err_str)?;
    let arch = presets::arch_for(5, pre.n_t, pre.n_d, Aperture::Half);
    if arch.pad_mode != PadMode::Zero {
        return Err("half-aperture architecture must use zero padding".into());
    }
    let tc = TrainConfig {
        n_epoch: pre.n_epoch,
        batch_size: 100,
        seed: 8,
        ..TrainConfig::default()
    };
    eprintln!("  training for {} epochs", tc.n_epoch);
    let model = neural::train(&set, &arch, &tc).map_err(err_str)?;

    let cfg200 = ScatterConfig::half(5.0, 200, 200);
    let gn = GnParams::default();
    let mut shapes = rng::stream(717, "acceptance-half-shapes");
    let mut errs = Vec::with_capacity(50);
    eprintln!("  refining 50 fresh half-aperture cases");
    for _ in 0..50 {
        let truth = sample_coeffs(5, &mut shapes).map_err(err_str)?;
        let err = (|| -> Result<f64, String> {
            let (u48, _) = solve_forward(&truth, &cfg48).map_err(err_str)?;
            let (u200, _) = solve_forward(&truth, &cfg200).map_err(err_str)?;
            let guess = neural::predict(&model, &u48).map_err(err_str)?;
            let refined = gauss_newton(&u200, &cfg200, &guess, &gn).map_err(err_str)?;
            relative_error(&refined.c_final, &truth).map_err(err_str)
        })()
        .unwrap_or(1.0);
        errs.push(err);
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    if !(mean <= 0.05) {
        return Err(format!("DL refined mean error {mean:.3e} at half aperture, need <= 0.05"));
    }
    Ok(format!("50 half-aperture cases, DL refined mean error {mean:.1e}"))
}

/// Criterion 8a: the high-frequency configuration runs end to end at a
/// reduced sample count.
fn high_frequency_smoke() -> Result<String, String> {
    let pre = presets::preset(20);
    let cfg = ScatterConfig::full(30.0, pre.n_t, pre.n_d);
    eprintln!("  generating 200 samples at the high-frequency settings");
    let data = dataset::generate(&cfg, 20, 200, 808).map_err(err_str)?;
    let set = data.training_set().map_err(err_str)?;
    let arch = presets::arch_for(20, pre.n_t, pre.n_d, Aperture::Full);
    let tc = TrainConfig { n_epoch: 3, batch_size: 100, seed: 9, ..TrainConfig::default() };
    eprintln!("  training for {} epochs", tc.n_epoch);
    let model = neural::train(&set, &arch, &tc).map_err(err_str)?;
    let (truth, u) = &data.samples[0];
    let pred = neural::predict(&model, u).map_err(err_str)?;
    let err = relative_error(&pred, truth).map_err(err_str)?;
    Ok(format!(
        "trained {} parameters, sample-0 prediction error {err:.2} (smoke only)",
        model.parameter_count()
    ))
}

/// Criterion 8b: the training-set threshold needed to reach a fixed
/// validation error grows with the obstacle complexity.
fn scaling_thresholds() -> Result<String, String> {
    let opt = ScalingOptions {
        eps_v: 0.05,
        seed: 11,
        n_val: 500,
        n_epoch: 150,
        batch_size: 100,
        train_grid: vec![2, 4, 6, 9, 14, 20, 30, 45, 68, 100, 150, 225],
        dims: 100,
    };
    let rows = studies::scaling(&[11.0, 12.0], &opt).map_err(err_str)?;
    let t1 = rows[0].threshold;
    let t2 = rows[1].threshold;
    let ok = match (t1, t2) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    let show = |t: Option<usize>| t.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
    if !ok {
        return Err(format!(
            "thresholds not increasing: M=1 needs {}, M=2 needs {}",
            show(t1),
            show(t2)
        ));
    }
    Ok(format!("threshold M=1: {}, M=2: {}", show(t1), show(t2)))
}

/// Criterion 9: the benchmark is bytewise deterministic for a fixed seed.
fn benchmark_determinism(slot: &RefCell<Option<CnnModel>>) -> Result<String, String> {
    let borrowed = slot.borrow();
    let model = borrowed.as_ref().ok_or("prerequisite model unavailable (criterion 5 failed)")?;
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let params = BenchmarkParams { n_cases: 3, seed: 99, ..BenchmarkParams::new(5.0, 5) };
    let mut digests = Vec::new();
    for run in 0..2 {
        let report = bench::benchmark(&params, model).map_err(err_str)?;
        let dir = tmp.join(format!("run{run}"));
        bench::write_report(&report, &dir).map_err(err_str)?;
        let mut bytes = Vec::new();
        for name in ["cases.csv", "summary.csv", "report.json"] {
            bytes.push(std::fs::read(dir.join(name)).map_err(err_str)?);
        }
        digests.push(bytes);
    }
    for (i, name) in ["cases.csv", "summary.csv", "report.json"].iter().enumerate() {
        if digests[0][i] != digests[1][i] {
            return Err(format!("{name} differs between identical runs"));
        }
    }
    Ok("two runs, three files each, bytewise identical".into())
}
