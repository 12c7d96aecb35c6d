//! The image feature pipeline end to end: dense patches, contrast
//! normalization, ZCA whitening, spike-mean encoding, grid pooling.
//!
//! With 6x6 patches at stride 1 a 32x32 image yields a 27x27 position grid;
//! a 3x3 pooling grid then gives 9·N features (14,400 at N=1600).
//!
//! ```bash
//! cargo run -p s3c --example feature_pipeline
//! ```

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s3c::inference::InferenceConfig;
use s3c::learning::{random_init, RandomInit};
use s3c::pipeline::{
    self, contrast_normalize, extract_patches, fit_zca, Image, PipelineConfig, PoolingConfig,
};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 48;

    // Whitening is fit on training patches once and reused at encode time.
    let train_patches = Array2::from_shape_fn((400, 108), |_| rng.random_range(0.0..255.0));
    let normalized = contrast_normalize(&train_patches);
    let whitening = fit_zca(&normalized, 0.01).unwrap();
    println!(
        "whitening fit on {} patches of dim {} (epsilon {})",
        train_patches.nrows(),
        train_patches.ncols(),
        whitening.epsilon
    );

    let params = random_init(
        108,
        &RandomInit {
            n,
            target_sparsity: 0.05,
            beta_tied: false,
        },
        3,
    )
    .unwrap();

    let img = Image::new(Array3::from_shape_fn((32, 32, 3), |_| {
        rng.random_range(0.0..255.0)
    }))
    .unwrap();
    let patches = extract_patches(&img, 6, 1).unwrap();
    println!(
        "32x32x3 image -> {} patches of dim {} (27x27 positions)",
        patches.nrows(),
        patches.ncols()
    );

    for grid in [3usize, 2, 1] {
        let cfg = PipelineConfig {
            pooling: PoolingConfig {
                patch_size: 6,
                grid,
                stride: 1,
            },
            inference: InferenceConfig {
                max_iters: 25,
                record_trace: false,
                elbo_tol: 1e-5,
                ..Default::default()
            },
            contrast_eps: None,
        };
        let features = pipeline::extract_image_features(&params, &whitening, &img, &cfg).unwrap();
        let mean = features.sum() / features.len() as f64;
        println!(
            "grid {grid}x{grid}: {} features (= {grid}^2 x {n}), mean activation {mean:.4}",
            features.len()
        );
    }
    println!("\nat N=1600 and grid 3 the same geometry gives 9 x 1600 = 14,400 features");
}
