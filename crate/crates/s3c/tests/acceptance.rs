//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test -p s3c --test acceptance -- --nocapture` to see the
//! per-criterion report.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use s3c::classify;
use s3c::inference::{self, InferenceConfig, SlabMode};
use s3c::learning::{
    self, FreeParams, FrozenQ, LearningRates, RandomInit, TrainConfig, TrainInit,
};
use s3c::math::logit;
use s3c::model::{ModelParams, VisibleBatch};
use s3c::oracle;
use s3c::pipeline::{self, Image, PipelineConfig, PoolingConfig};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] criterion {id:02} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn random_unit_dict(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Array2<f64> {
    let mut w = Array2::zeros((d, n));
    for j in 0..n {
        let mut norm = 0.0;
        for dd in 0..d {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            w[[dd, j]] = z;
            norm += z * z;
        }
        for dd in 0..d {
            w[[dd, j]] /= norm.sqrt();
        }
    }
    w
}

fn random_params(rng: &mut ChaCha8Rng, d: usize, n: usize, tied: bool) -> ModelParams {
    let beta = if tied {
        Array1::from_elem(d, rng.random_range(0.5..3.0))
    } else {
        Array1::from_iter((0..d).map(|_| rng.random_range(0.5..3.0)))
    };
    ModelParams::new(
        random_unit_dict(rng, d, n),
        Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..2.0))),
        Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..2.0))),
        Array1::from_iter((0..n).map(|_| rng.random_range(0.5..3.0))),
        beta,
        tied,
    )
    .unwrap()
}

fn random_v(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_iter((0..d).map(|_| rng.random_range(-2.0..2.0)))
}

fn single_row_batch(v: &Array1<f64>) -> VisibleBatch {
    VisibleBatch::new(v.clone().insert_axis(ndarray::Axis(0))).unwrap()
}

fn full_trace_config() -> InferenceConfig {
    InferenceConfig {
        elbo_tol: f64::NEG_INFINITY,
        record_trace: true,
        ..Default::default()
    }
}

#[test]
fn criterion_01_oracle_exactness_at_n1() {
    let started = Instant::now();
    // Undamped updates: at N=1 the slab target is a constant, and with
    // eta = 1 a clipped sign flip crosses zero in one step and locks on in
    // the next. (Damping with eta(1+rho) <= 1 scales a sign-mismatched slab
    // by a positive factor forever, so it can never cross zero.)
    let cfg = InferenceConfig {
        eta_s: 1.0,
        eta_h: 1.0,
        ..full_trace_config()
    };

    // Canonical instance: p(h=1 | v=0) = 1 / (1 + sqrt(2)).
    let canonical = ModelParams::new(
        Array2::eye(1),
        Array1::zeros(1),
        Array1::zeros(1),
        Array1::ones(1),
        Array1::ones(1),
        false,
    )
    .unwrap();
    let (q, _) = inference::e_step(&canonical, &single_row_batch(&Array1::zeros(1)), &cfg)
        .unwrap();
    let expected = 1.0 / (1.0 + 2f64.sqrt());
    let canonical_err = (q.h_hat[[0, 0]] - expected).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(2024_01);
    let mut worst = canonical_err;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let params = random_params(&mut rng, d, 1, false);
        let v = random_v(&mut rng, d);
        let exact = oracle::exact_posterior(&params, v.view()).unwrap();
        let truth = exact.marginal_h()[0];
        let (q, _) = inference::e_step(&params, &single_row_batch(&v), &cfg).unwrap();
        worst = worst.max((q.h_hat[[0, 0]] - truth).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        1,
        "oracle exactness at N=1",
        worst <= 1e-6 && elapsed < 5.0,
        &format!("max |h_hat - p(h=1|v)| = {worst:.2e} over 100 instances, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_02_elbo_never_exceeds_evidence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024_02);
    let mut min_slack = f64::INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=10);
        let params = random_params(&mut rng, d, n, false);
        let v = random_v(&mut rng, d);
        let log_evidence = oracle::exact_posterior(&params, v.view()).unwrap().log_evidence;
        let (_, trace) =
            inference::e_step(&params, &single_row_batch(&v), &full_trace_config()).unwrap();
        for &bound in &trace.elbo {
            min_slack = min_slack.min(log_evidence - bound);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        2,
        "ELBO bounded by log evidence at every iteration",
        min_slack >= -1e-8 && elapsed < 30.0,
        &format!("min slack = {min_slack:.2e}, {elapsed:.2}s"),
    );
}

#[test]
fn criterion_03_e_step_ascent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024_02);
    let mut violations = 0usize;
    let mut failures = 0usize;
    for _ in 0..100 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=10);
        let params = random_params(&mut rng, d, n, false);
        let v = random_v(&mut rng, d);
        let (_, trace) =
            inference::e_step(&params, &single_row_batch(&v), &full_trace_config()).unwrap();
        violations += trace.ascent_violations;
        if trace.elbo.last().unwrap() < trace.elbo.first().unwrap() {
            failures += 1;
        }
    }
    report(
        3,
        "final ELBO >= initial ELBO",
        failures == 0,
        &format!("0.5-damped runs: {failures}/100 net decreases; {violations} per-iteration dips logged (reported, not failed)"),
    );
}

#[test]
fn criterion_04_conjugate_gradient_guarantee() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024_04);
    let mut worst_drop = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let n = rng.random_range(2..=6);
        let params = random_params(&mut rng, d, n, false);
        let v = random_v(&mut rng, d);
        let q0 = inference::init_q(&params, 1);
        let mut h_hat = q0.h_hat.row(0).to_owned();
        let mut s_hat = q0.s_hat.row(0).to_owned();
        for _ in 0..5 {
            let before = inference::elbo(&params, v.view(), &h_hat, &s_hat);
            s_hat = inference::cg_s_update(&params, v.view(), &h_hat, &s_hat, 4).unwrap();
            let after = inference::elbo(&params, v.view(), &h_hat, &s_hat);
            worst_drop = worst_drop.min(after - before);
            let star = inference::h_star(&params, v.view(), &h_hat, &s_hat);
            h_hat = inference::damp(&star, &h_hat, 0.5);
        }
        // The full CG-mode E-step must run cleanly as well.
        let cfg = InferenceConfig {
            s_mode: SlabMode::ConjugateGradient,
            max_iters: 10,
            ..full_trace_config()
        };
        inference::e_step(&params, &single_row_batch(&v), &cfg).unwrap();
    }
    report(
        4,
        "CG slab update never decreases the ELBO",
        worst_drop >= -1e-9,
        &format!("worst ELBO change across CG calls = {worst_drop:.2e}"),
    );
}

#[test]
fn criterion_05_moments_ledger_vs_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024_05);
    let mut worst_sigma = 0.0f64;
    for trial in 0..20 {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(1..=5);
        let params = random_params(&mut rng, d, n, false);
        let v = random_v(&mut rng, d);
        let h_hat = Array1::from_iter((0..n).map(|_| rng.random_range(0.05..0.95)));
        let s_hat = Array1::from_iter((0..n).map(|_| rng.random_range(-2.0..2.0)));
        let closed = inference::elbo(&params, v.view(), &h_hat, &s_hat);
        let (mc, se) =
            oracle::mc_elbo_estimate(&params, v.view(), &h_hat, &s_hat, 100_000, 7000 + trial);
        worst_sigma = worst_sigma.max((closed - mc).abs() / se);
    }
    report(
        5,
        "closed-form ELBO matches Monte Carlo",
        worst_sigma <= 3.0,
        &format!("max |closed - MC| = {worst_sigma:.2} standard errors over 20 instances"),
    );
}

#[test]
fn criterion_06_m_step_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024_06);
    let mut worst = 0.0f64;
    for &tied in &[false, true] {
        let d = 3;
        let n = 4;
        let m = 6;
        let params = random_params(&mut rng, d, n, tied);
        let batch = VisibleBatch::new(Array2::from_shape_fn((m, d), |_| {
            rng.random_range(-2.0..2.0)
        }))
        .unwrap();
        let q = inference::VariationalState {
            h_hat: Array2::from_shape_fn((m, n), |_| rng.random_range(0.05..0.95)),
            s_hat: Array2::from_shape_fn((m, n), |_| rng.random_range(-2.0..2.0)),
        };
        let frozen = FrozenQ::capture(&params, &q);
        let analytic = learning::m_step_gradients(&params, &batch, &q).unwrap();
        let base = FreeParams::from(&params);
        let eval =
            |theta: &FreeParams| learning::frozen_energy_functional(theta, &frozen, &batch);
        let step = 1e-5;

        let rel = |a: &[f64], f: &[f64]| -> f64 {
            let scale = a
                .iter()
                .chain(f.iter())
                .fold(0.0f64, |acc, &x| acc.max(x.abs()))
                .max(1e-6);
            a.iter()
                .zip(f.iter())
                .map(|(&x, &y)| (x - y).abs() / scale)
                .fold(0.0, f64::max)
        };

        let mut fd_w = Vec::new();
        for dd in 0..d {
            for i in 0..n {
                let mut plus = base.clone();
                plus.w[[dd, i]] += step;
                let mut minus = base.clone();
                minus.w[[dd, i]] -= step;
                fd_w.push((eval(&plus) - eval(&minus)) / (2.0 * step));
            }
        }
        let a_w: Vec<f64> = analytic.w.iter().cloned().collect();
        worst = worst.max(rel(&a_w, &fd_w));

        for (group, analytic_vec, len, which) in [
            ("b", &analytic.b, n, 0usize),
            ("mu", &analytic.mu, n, 1),
            ("alpha", &analytic.alpha, n, 2),
            ("beta", &analytic.beta, d, 3),
        ] {
            let mut fd = Vec::new();
            for i in 0..len {
                let mut plus = base.clone();
                let mut minus = base.clone();
                {
                    let (p, m) = match which {
                        0 => (&mut plus.b, &mut minus.b),
                        1 => (&mut plus.mu, &mut minus.mu),
                        2 => (&mut plus.alpha, &mut minus.alpha),
                        _ => (&mut plus.beta, &mut minus.beta),
                    };
                    p[i] += step;
                    m[i] -= step;
                }
                fd.push((eval(&plus) - eval(&minus)) / (2.0 * step));
            }
            if tied && group == "beta" {
                // The tied scalar's gradient is stored as the per-dimension
                // average of the elementwise derivatives.
                let mean = fd.iter().sum::<f64>() / fd.len() as f64;
                fd = vec![mean; fd.len()];
            }
            let a: Vec<f64> = analytic_vec.iter().cloned().collect();
            worst = worst.max(rel(&a, &fd));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        6,
        "M-step gradients vs central finite differences",
        worst <= 1e-4 && elapsed < 10.0,
        &format!("max relative error = {worst:.2e} over all groups and both beta modes, {elapsed:.2}s"),
    );
}

/// The documented high-coherence instance: eight nearly parallel unit columns
/// (pairwise cosine >= 0.95) under a strong visible precision.
fn coherent_instance() -> (ModelParams, VisibleBatch) {
    let d = 10;
    let n = 8;
    let mut w = Array2::zeros((d, n));
    for j in 0..n {
        let mut col = vec![1.0; d];
        col[j] *= 1.35;
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (dd, x) in col.iter().enumerate() {
            w[[dd, j]] = x / norm;
        }
    }
    let params = ModelParams::new(
        w,
        Array1::from_elem(n, 1.0),
        Array1::from_elem(n, 1.0),
        Array1::from_elem(n, 1.0),
        Array1::from_elem(d, 4.0),
        false,
    )
    .unwrap();
    for j in 0..n {
        for k in (j + 1)..n {
            assert!(params.w().column(j).dot(&params.w().column(k)) >= 0.95);
        }
    }
    let v = Array2::from_shape_fn((1, d), |(_, dd)| 3.0 + 0.1 * dd as f64);
    (params, VisibleBatch::new(v).unwrap())
}

#[test]
fn criterion_07_clipping_controls_coherent_dictionaries() {
    let (params, batch) = coherent_instance();
    let cfg = InferenceConfig {
        rho: 0.5,
        eta_s: 1.0,
        eta_h: 1.0,
        max_iters: 1000,
        elbo_tol: f64::NEG_INFINITY,
        record_trace: true,
        ..Default::default()
    };
    let result = inference::e_step(&params, &batch, &cfg);
    let (pass, detail) = match result {
        Ok((_, trace)) => {
            let worst = trace.max_abs_s.iter().cloned().fold(0.0f64, f64::max);
            (
                worst <= 1e3 && trace.max_abs_s.len() == 1001,
                format!("max |s_hat| = {worst:.3} over 1000 undamped clipped iterations"),
            )
        }
        Err(e) => (false, format!("diverged: {e}")),
    };
    report(7, "reflection clipping bounds coherent dictionaries", pass, &detail);
}

#[test]
fn criterion_08_feature_geometry() {
    // Exact shape facts at N=1600 via the pooling path (cheap).
    let features = Array2::from_elem((27 * 27, 1600), 0.5);
    let g3 = pipeline::pool_features(&features, 27, 27, 3).unwrap();
    let g2 = pipeline::pool_features(&features, 27, 27, 2).unwrap();
    let shapes_ok = g3.len() == 14_400 && g2.len() == 6_400;

    // Timed end-to-end variant at N=64 over a 32x32x3 image.
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024_08);
    let d = 108;
    let n = 64;
    let params = ModelParams::new(
        random_unit_dict(&mut rng, d, n),
        Array1::from_elem(n, logit(0.05)),
        Array1::ones(n),
        Array1::ones(n),
        Array1::ones(d),
        false,
    )
    .unwrap();
    let train_patches = Array2::from_shape_fn((300, d), |_| rng.random_range(0.0..255.0));
    let whitening = pipeline::fit_zca(&pipeline::contrast_normalize(&train_patches), 0.01).unwrap();
    let img = Image::new(Array3::from_shape_fn((32, 32, 3), |_| {
        rng.random_range(0.0..255.0)
    }))
    .unwrap();
    let mut cfg = PipelineConfig {
        pooling: PoolingConfig {
            patch_size: 6,
            grid: 3,
            stride: 1,
        },
        inference: InferenceConfig {
            max_iters: 30,
            record_trace: false,
            elbo_tol: 1e-5,
            ..Default::default()
        },
        contrast_eps: None,
    };
    let f3 = pipeline::extract_image_features(&params, &whitening, &img, &cfg).unwrap();
    cfg.pooling.grid = 2;
    let f2 = pipeline::extract_image_features(&params, &whitening, &img, &cfg).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let timed_ok = f3.len() == 576 && f2.len() == 256 && elapsed < 10.0;
    report(
        8,
        "feature geometry",
        shapes_ok && timed_ok,
        &format!(
            "N=1600: {} / {} features; N=64 end-to-end: {} / {} in {elapsed:.2}s",
            g3.len(),
            g2.len(),
            f3.len(),
            f2.len()
        ),
    );
}

#[test]
fn criterion_09_sparsity_analogue() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let (d, n) = (36, 100);
    let gen = ModelParams::new(
        random_unit_dict(&mut rng, d, n),
        Array1::from_elem(n, logit(0.02)),
        Array1::from_elem(n, 2.0),
        Array1::ones(n),
        Array1::from_elem(d, 9.0),
        false,
    )
    .unwrap();
    let train = gen.sample_ancestral(901, 10_000).v;
    let held = gen.sample_ancestral(902, 2_000).v;
    let cfg = TrainConfig {
        batch_size: 100,
        epochs: 6,
        seed: 903,
        rates: LearningRates {
            w: 0.1,
            b: 0.1,
            mu: 0.1,
            alpha: 0.01,
            beta: 0.5,
        },
        inference: InferenceConfig {
            max_iters: 25,
            elbo_tol: 1e-5,
            record_trace: false,
            ..Default::default()
        },
        ..Default::default()
    };
    let init = RandomInit {
        n,
        target_sparsity: 0.02,
        beta_tied: false,
    };
    let (model, _) = learning::train_em(&train, &cfg, TrainInit::Random(init)).unwrap();

    let (q, trace) = inference::e_step(&model, &held, &full_trace_config()).unwrap();
    let sparsity = q.sparsity(0.01);
    let rise_then_sparsify = *trace.sparsity.last().unwrap() > trace.sparsity[1];
    let elapsed = started.elapsed().as_secs_f64();
    report(
        9,
        "sparsity analogue on held-out data",
        sparsity >= 0.80 && rise_then_sparsify && elapsed < 300.0,
        &format!(
            "fraction h_hat < 0.01 = {sparsity:.4}; trace sparsity iter1 {:.4} -> final {:.4}; {elapsed:.1}s",
            trace.sparsity[1],
            trace.sparsity.last().unwrap()
        ),
    );
}

#[test]
fn criterion_10_dictionary_recovery() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (d, n) = (16, 8);
    let gen = ModelParams::new(
        random_unit_dict(&mut rng, d, n),
        Array1::from_elem(n, logit(0.1)),
        Array1::from_elem(n, 3.0),
        Array1::ones(n),
        Array1::from_elem(d, 100.0),
        false,
    )
    .unwrap();
    let train = gen.sample_ancestral(1001, 20_000).v;
    let cfg = TrainConfig {
        batch_size: 100,
        epochs: 8,
        seed: 1002,
        rates: LearningRates {
            w: 0.1,
            b: 0.05,
            mu: 0.05,
            alpha: 0.005,
            beta: 0.01,
        },
        inference: InferenceConfig {
            max_iters: 30,
            elbo_tol: 1e-5,
            record_trace: false,
            ..Default::default()
        },
        ..Default::default()
    };
    let (model, _) = learning::train_em(&train, &cfg, TrainInit::Random(RandomInit::new(n)))
        .unwrap();
    let mut matched = 0;
    let mut cosines = Vec::new();
    for j in 0..n {
        let mut best = 0.0f64;
        for k in 0..n {
            best = best.max(gen.w().column(j).dot(&model.w().column(k)).abs());
        }
        cosines.push(format!("{best:.3}"));
        if best >= 0.9 {
            matched += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        10,
        "dictionary recovery",
        matched >= 6 && elapsed < 300.0,
        &format!("{matched}/8 true columns matched at |cos| >= 0.9 [{}], {elapsed:.1}s", cosines.join(", ")),
    );
}

#[test]
fn criterion_11_persistence() {
    use std::process::Command;

    // Library-level bitwise round trip.
    let mut rng = ChaCha8Rng::seed_from_u64(2024_11);
    let params = random_params(&mut rng, 5, 7, false);
    let dir_a = tempfile::TempDir::new().unwrap();
    let dir_b = tempfile::TempDir::new().unwrap();
    let archive = s3c::io::ModelArchive {
        params,
        whitening: None,
    };
    s3c::io::save_model(dir_a.path(), &archive).unwrap();
    let reloaded = s3c::io::load_model(dir_a.path()).unwrap();
    s3c::io::save_model(dir_b.path(), &reloaded).unwrap();
    let round_trip_ok = dir_bytes(dir_a.path()) == dir_bytes(dir_b.path());

    // Two identical CLI runs with --workers 1 must produce identical archives.
    let work = tempfile::TempDir::new().unwrap();
    let config_path = work.path().join("run.toml");
    std::fs::write(
        &config_path,
        "[model]\nn = 6\n\n[train]\nbatch_size = 20\nepochs = 2\nseed = 11\n\n[inference]\nmax_iters = 15\n",
    )
    .unwrap();
    let data_path = work.path().join("data.s3cd");
    let gen = random_params(&mut rng, 4, 6, false);
    s3c::io::save_matrix(&data_path, gen.sample_ancestral(77, 200).v.matrix()).unwrap();
    let bin = env!("CARGO_BIN_EXE_s3c");
    let mut runs_ok = true;
    for out in ["runA", "runB"] {
        let status = Command::new(bin)
            .args([
                "train",
                "--workers",
                "1",
                "--config",
                config_path.to_str().unwrap(),
                "--data",
                data_path.to_str().unwrap(),
                "--out",
                work.path().join(out).to_str().unwrap(),
            ])
            .status()
            .unwrap();
        runs_ok &= status.success();
    }
    let cli_identical = dir_bytes(&work.path().join("runA/model"))
        == dir_bytes(&work.path().join("runB/model"))
        && std::fs::read(work.path().join("runA/effective_config.toml")).unwrap()
            == std::fs::read(work.path().join("runB/effective_config.toml")).unwrap();
    report(
        11,
        "persistence",
        round_trip_ok && runs_ok && cli_identical,
        &format!("round trip byte-identical: {round_trip_ok}; two --workers 1 runs identical: {cli_identical}"),
    );
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn criterion_12_classifier_sanity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024_12);
    let centers = [[5.0, 0.0], [-5.0, 4.0], [0.0, -6.0]];
    let mut make = |count: usize, seed_shift: f64| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((count, 2));
        let mut y = Vec::with_capacity(count);
        for i in 0..count {
            let c = i % 3;
            x[[i, 0]] = centers[c][0] + rng.random_range(-1.0..1.0) + seed_shift * 0.0;
            x[[i, 1]] = centers[c][1] + rng.random_range(-1.0..1.0);
            y.push(c);
        }
        (x, y)
    };
    let (x_train, y_train) = make(1000, 0.0);
    let (x_test, y_test) = make(1000, 1.0);
    let model = classify::svm_train(&x_train, &y_train, 3, 1e-4, 10, 5).unwrap();
    let pred = classify::svm_predict(&model, &x_test).unwrap();
    let acc = pred
        .iter()
        .zip(y_test.iter())
        .filter(|(a, b)| a == b)
        .count() as f64
        / y_test.len() as f64;
    let elapsed = started.elapsed().as_secs_f64();
    report(
        12,
        "classifier sanity",
        acc >= 0.98 && elapsed < 5.0,
        &format!("test accuracy = {acc:.4} on 1000/1000 split, {elapsed:.2}s"),
    );
}
