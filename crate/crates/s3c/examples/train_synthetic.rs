//! Variational EM on synthetic data: dictionary recovery.
//!
//! Draws data from a known sparse model, trains from a random start, and
//! reports how many true dictionary columns the learned model recovers.
//!
//! ```bash
//! cargo run -p s3c --example train_synthetic
//! ```

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s3c::inference::InferenceConfig;
use s3c::learning::{train_em, LearningRates, RandomInit, TrainConfig, TrainInit};
use s3c::math::logit;
use s3c::model::ModelParams;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (d, n) = (16, 8);
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
    let gen = ModelParams::new(
        w,
        Array1::from_elem(n, logit(0.1)),
        Array1::from_elem(n, 3.0),
        Array1::ones(n),
        Array1::from_elem(d, 100.0),
        false,
    )
    .unwrap();
    println!("ground truth: D={d}, N={n}, 10% spike activity, slab mean 3");

    let data = gen.sample_ancestral(1001, 20_000).v;
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
    let (model, log) = train_em(&data, &cfg, TrainInit::Random(RandomInit::new(n))).unwrap();

    println!("\nbatch ELBO along training:");
    for r in log.iter().step_by(200) {
        println!("  step {:4}: {:+.4}", r.step, r.elbo);
    }
    println!("  step {:4}: {:+.4}", log.last().unwrap().step, log.last().unwrap().elbo);

    println!("\ntrue column -> best |cosine| against learned columns");
    let mut matched = 0;
    for j in 0..n {
        let mut best = 0.0f64;
        for k in 0..n {
            best = best.max(gen.w().column(j).dot(&model.w().column(k)).abs());
        }
        println!("  column {j}: {best:.4}");
        if best >= 0.9 {
            matched += 1;
        }
    }
    println!("\nrecovered {matched}/{n} columns at |cosine| >= 0.9");
}
