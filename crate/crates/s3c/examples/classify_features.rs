//! One-vs-all hinge-loss classification over feature vectors, with the
//! per-dimension standardization that is stored alongside the model.
//!
//! ```bash
//! cargo run -p s3c --example classify_features
//! ```

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s3c::classify::{svm_objective, svm_predict, svm_train, FeatureScaler};

fn blobs(
    rng: &mut ChaCha8Rng,
    per_class: usize,
    spread: f64,
) -> (Array2<f64>, Vec<usize>) {
    let centers = [[5.0, 0.0], [-5.0, 4.0], [0.0, -6.0]];
    let m = per_class * 3;
    let mut x = Array2::zeros((m, 2));
    let mut y = Vec::with_capacity(m);
    for c in 0..3 {
        for i in 0..per_class {
            let r = c * per_class + i;
            x[[r, 0]] = centers[c][0] + rng.random_range(-spread..spread);
            x[[r, 1]] = centers[c][1] + rng.random_range(-spread..spread);
            y.push(c);
        }
    }
    (x, y)
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (x_train, y_train) = blobs(&mut rng, 400, 1.2);
    let (x_test, y_test) = blobs(&mut rng, 400, 1.2);

    let scaler = FeatureScaler::fit(&x_train).unwrap();
    let xs_train = scaler.transform(&x_train).unwrap();
    let xs_test = scaler.transform(&x_test).unwrap();

    println!("lambda      objective   train acc   test acc");
    for &lambda in &[1e-2, 1e-3, 1e-4] {
        let model = svm_train(&xs_train, &y_train, 3, lambda, 10, 7).unwrap();
        let obj = svm_objective(&model, &xs_train, &y_train);
        let acc = |x: &Array2<f64>, y: &[usize]| {
            let pred = svm_predict(&model, x).unwrap();
            pred.iter().zip(y.iter()).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
        };
        println!(
            "{lambda:.0e}   {obj:11.4}   {:9.4}   {:8.4}",
            acc(&xs_train, &y_train),
            acc(&xs_test, &y_test)
        );
    }
}
