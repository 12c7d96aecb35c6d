//! One-vs-all linear classifier with hinge loss and L2 regularization,
//! trained by stochastic subgradient descent with the 1/(λt) step schedule.
//! Stands in for a linear SVM over pooled features at desk scale.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid {name}: {value}")]
    InvalidValue { name: &'static str, value: f64 },
}

/// Trained one-vs-all linear model.
#[derive(Debug, Clone)]
pub struct LinearModel {
    /// K × F class weight rows.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub lambda: f64,
}

/// Per-dimension standardization fitted on training features and stored with
/// the classifier.
#[derive(Debug, Clone)]
pub struct FeatureScaler {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl FeatureScaler {
    pub fn fit(x: &Array2<f64>) -> Result<Self, ClassifyError> {
        if x.nrows() == 0 {
            return Err(ClassifyError::EmptyDataset);
        }
        let m = x.nrows() as f64;
        let mean = x.mean_axis(ndarray::Axis(0)).expect("nonempty");
        let mut scale = Array1::zeros(x.ncols());
        for j in 0..x.ncols() {
            let mut var = 0.0;
            for i in 0..x.nrows() {
                let d = x[[i, j]] - mean[j];
                var += d * d;
            }
            let std = (var / m).sqrt();
            scale[j] = if std < 1e-12 { 1.0 } else { std };
        }
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>, ClassifyError> {
        if x.ncols() != self.mean.len() {
            return Err(ClassifyError::DimMismatch(format!(
                "{} features vs scaler dim {}",
                x.ncols(),
                self.mean.len()
            )));
        }
        Ok((x - &self.mean) / &self.scale)
    }
}

fn check_labels(y: &[usize], classes: usize) -> Result<(), ClassifyError> {
    for &label in y {
        if label >= classes {
            return Err(ClassifyError::LabelOutOfRange { label, classes });
        }
    }
    Ok(())
}

/// Trains K one-vs-all hinge-loss minimizers by stochastic subgradient
/// descent with step 1/(λt). Deterministic given the seed; classes train
/// independently on their own shuffle streams.
pub fn svm_train(
    x: &Array2<f64>,
    y: &[usize],
    classes: usize,
    lambda: f64,
    epochs: usize,
    seed: u64,
) -> Result<LinearModel, ClassifyError> {
    let m = x.nrows();
    let f = x.ncols();
    if m == 0 {
        return Err(ClassifyError::EmptyDataset);
    }
    if y.len() != m {
        return Err(ClassifyError::DimMismatch(format!(
            "{} labels vs {} rows",
            y.len(),
            m
        )));
    }
    if classes == 0 {
        return Err(ClassifyError::InvalidValue {
            name: "classes",
            value: 0.0,
        });
    }
    check_labels(y, classes)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ClassifyError::InvalidValue {
            name: "lambda",
            value: lambda,
        });
    }

    let rows: Vec<(Array2<f64>, f64)> = (0..classes)
        .into_par_iter()
        .map(|class| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(class as u64);
            let mut w = Array1::<f64>::zeros(f);
            let mut bias = 0.0f64;
            let mut t = 1.0f64;
            let mut order: Vec<usize> = (0..m).collect();
            for _ in 0..epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let target = if y[i] == class { 1.0 } else { -1.0 };
                    let eta = 1.0 / (lambda * t);
                    let margin = target * (w.dot(&x.row(i)) + bias);
                    // The bias is treated as the weight of a constant feature,
                    // shrinking with the rest; otherwise the first 1/(λt) step
                    // leaves it stranded far from the optimum.
                    let shrink = 1.0 - eta * lambda;
                    w *= shrink;
                    bias *= shrink;
                    if margin < 1.0 {
                        w.scaled_add(eta * target, &x.row(i));
                        bias += eta * target;
                    }
                    t += 1.0;
                }
            }
            (w.insert_axis(ndarray::Axis(0)), bias)
        })
        .collect();

    let mut weights = Array2::zeros((classes, f));
    let mut bias = Array1::zeros(classes);
    for (c, (w, b)) in rows.into_iter().enumerate() {
        weights.row_mut(c).assign(&w.row(0));
        bias[c] = b;
    }
    Ok(LinearModel {
        weights,
        bias,
        lambda,
    })
}

/// Class scores w_k · x + bias_k for every row.
pub fn decision_values(
    model: &LinearModel,
    x: &Array2<f64>,
) -> Result<Array2<f64>, ClassifyError> {
    if x.ncols() != model.weights.ncols() {
        return Err(ClassifyError::DimMismatch(format!(
            "{} features vs model dim {}",
            x.ncols(),
            model.weights.ncols()
        )));
    }
    Ok(x.dot(&model.weights.t()) + &model.bias)
}

/// Argmax over class scores; ties break toward the lower class index.
pub fn svm_predict(model: &LinearModel, x: &Array2<f64>) -> Result<Vec<usize>, ClassifyError> {
    let scores = decision_values(model, x)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_score = row[0];
            for (k, &s) in row.iter().enumerate().skip(1) {
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            best
        })
        .collect())
}

/// Total one-vs-all objective: Σ_k [ λ/2 ‖w_k‖² + mean hinge loss of class k ].
pub fn svm_objective(model: &LinearModel, x: &Array2<f64>, y: &[usize]) -> f64 {
    let classes = model.weights.nrows();
    let m = x.nrows();
    let mut total = 0.0;
    for c in 0..classes {
        let w = model.weights.row(c);
        total += 0.5 * model.lambda * w.dot(&w);
        let mut hinge = 0.0;
        for i in 0..m {
            let target = if y[i] == c { 1.0 } else { -1.0 };
            let margin = target * (w.dot(&x.row(i)) + model.bias[c]);
            hinge += (1.0 - margin).max(0.0);
        }
        total += hinge / m as f64;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Well-separated Gaussian blobs, one per class.
    fn blobs(per_class: usize, classes: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [
            [4.0, 0.0],
            [-4.0, 3.0],
            [0.0, -5.0],
            [6.0, 6.0],
        ];
        let m = per_class * classes;
        let mut x = Array2::zeros((m, 2));
        let mut y = Vec::with_capacity(m);
        for c in 0..classes {
            for i in 0..per_class {
                let r = c * per_class + i;
                x[[r, 0]] = centers[c][0] + rng.random_range(-0.8..0.8);
                x[[r, 1]] = centers[c][1] + rng.random_range(-0.8..0.8);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let (x, y) = blobs(60, 2, 7);
        let model = svm_train(&x, &y, 2, 1e-4, 20, 1).unwrap();
        let pred = svm_predict(&model, &x).unwrap();
        let acc = pred
            .iter()
            .zip(y.iter())
            .filter(|(a, b)| a == b)
            .count() as f64
            / y.len() as f64;
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn constant_labels_predict_that_label() {
        let (x, _) = blobs(30, 2, 9);
        let y = vec![1usize; x.nrows()];
        let model = svm_train(&x, &y, 3, 1e-3, 5, 2).unwrap();
        let pred = svm_predict(&model, &x).unwrap();
        assert!(pred.iter().all(|&p| p == 1));
    }

    #[test]
    fn zero_model_ties_break_to_class_zero() {
        let model = LinearModel {
            weights: Array2::zeros((3, 2)),
            bias: Array1::zeros(3),
            lambda: 1e-4,
        };
        let x = Array2::from_elem((5, 2), 1.0);
        let pred = svm_predict(&model, &x).unwrap();
        assert!(pred.iter().all(|&p| p == 0));
    }

    #[test]
    fn argmax_invariant_under_positive_rescaling() {
        let (x, y) = blobs(40, 3, 11);
        let model = svm_train(&x, &y, 3, 1e-3, 8, 3).unwrap();
        let pred = svm_predict(&model, &x).unwrap();
        let scaled = LinearModel {
            weights: &model.weights * 3.7,
            bias: &model.bias * 3.7,
            lambda: model.lambda,
        };
        let pred_scaled = svm_predict(&scaled, &x).unwrap();
        assert_eq!(pred, pred_scaled);
    }

    #[test]
    fn duplicated_columns_split_symmetrically() {
        let (x, y) = blobs(50, 2, 13);
        let f = x.ncols();
        // Duplicate column 0.
        let mut x_dup = Array2::zeros((x.nrows(), f + 1));
        for i in 0..x.nrows() {
            for j in 0..f {
                x_dup[[i, j]] = x[[i, j]];
            }
            x_dup[[i, f]] = x[[i, 0]];
        }
        let model_dup = svm_train(&x_dup, &y, 2, 1e-3, 6, 5).unwrap();
        for c in 0..2 {
            assert_eq!(
                model_dup.weights[[c, 0]].to_bits(),
                model_dup.weights[[c, f]].to_bits(),
                "tied-initialization symmetry broken for class {c}"
            );
        }

        // Halving the original weight across the two copies reproduces the
        // original decision values exactly.
        let model = svm_train(&x, &y, 2, 1e-3, 6, 5).unwrap();
        let mut weights_half = Array2::zeros((2, f + 1));
        for c in 0..2 {
            for j in 0..f {
                weights_half[[c, j]] = model.weights[[c, j]];
            }
            weights_half[[c, 0]] = model.weights[[c, 0]] / 2.0;
            weights_half[[c, f]] = model.weights[[c, 0]] / 2.0;
        }
        let halved = LinearModel {
            weights: weights_half,
            bias: model.bias.clone(),
            lambda: model.lambda,
        };
        let base = decision_values(&model, &x).unwrap();
        let dup = decision_values(&halved, &x_dup).unwrap();
        for i in 0..x.nrows() {
            for c in 0..2 {
                assert!((base[[i, c]] - dup[[i, c]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn objective_decreases_with_more_epochs() {
        let (x, y) = blobs(50, 3, 17);
        let early = svm_train(&x, &y, 3, 1e-3, 2, 7).unwrap();
        let late = svm_train(&x, &y, 3, 1e-3, 12, 7).unwrap();
        let obj_early = svm_objective(&early, &x, &y);
        let obj_late = svm_objective(&late, &x, &y);
        assert!(
            obj_late < obj_early,
            "objective did not improve: {obj_early} -> {obj_late}"
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Array2::zeros((0, 2));
        assert!(matches!(
            svm_train(&x, &[], 2, 1e-3, 1, 0),
            Err(ClassifyError::EmptyDataset)
        ));
        let x = Array2::zeros((2, 2));
        assert!(matches!(
            svm_train(&x, &[0, 5], 2, 1e-3, 1, 0),
            Err(ClassifyError::LabelOutOfRange { label: 5, classes: 2 })
        ));
        let model = LinearModel {
            weights: Array2::zeros((2, 3)),
            bias: Array1::zeros(2),
            lambda: 1e-3,
        };
        assert!(svm_predict(&model, &Array2::zeros((1, 2))).is_err());
    }

    #[test]
    fn scaler_standardizes_and_guards_constants() {
        let mut x = Array2::zeros((4, 2));
        for i in 0..4 {
            x[[i, 0]] = i as f64;
            x[[i, 1]] = 9.0;
        }
        let scaler = FeatureScaler::fit(&x).unwrap();
        let out = scaler.transform(&x).unwrap();
        let mean0 = out.column(0).sum() / 4.0;
        assert!(mean0.abs() < 1e-12);
        assert!(out.column(1).iter().all(|&v| v == 0.0));
    }
}
