//! Feature-extraction protocol: dense patch extraction, per-patch contrast
//! normalization, ZCA whitening, batched encoding with E_Q[h], and grid
//! average pooling.
//!
//! Patches are flattened in (row, column, channel) order; the whitening
//! transform is fit on training patches once and reused at encode time.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Array3};
use thiserror::Error;

use crate::inference::{self, InferError, InferenceConfig};
use crate::model::{ModelError, ModelParams, VisibleBatch};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("patch size {patch} exceeds image extent {extent}")]
    PatchTooLarge { patch: usize, extent: usize },
    #[error("pooling grid {grid} is finer than the {positions} patch positions per side")]
    GridTooFine { grid: usize, positions: usize },
    #[error("covariance is rank deficient (eigenvalue {eigenvalue:.3e} below 1e-12) and epsilon is zero")]
    RankDeficient { eigenvalue: f64 },
    #[error("need at least {needed} patches for a full-rank whitening fit, got {got}")]
    InsufficientPatches { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid {name}: {value}")]
    InvalidValue { name: &'static str, value: f64 },
    #[error(transparent)]
    Inference(#[from] InferError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// An H × W × C image with finite real entries.
#[derive(Debug, Clone)]
pub struct Image {
    pixels: Array3<f64>,
}

impl Image {
    pub fn new(pixels: Array3<f64>) -> Result<Self, PipelineError> {
        if pixels.iter().any(|x| !x.is_finite()) {
            return Err(PipelineError::DimMismatch(
                "image contains non-finite pixels".into(),
            ));
        }
        Ok(Self { pixels })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }
}

/// Patch mean and ZCA matrix learned from training patches.
#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    pub zca: Array2<f64>,
    pub epsilon: f64,
}

/// Patch size, pooling grid, and stride of the extraction protocol.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolingConfig {
    pub patch_size: usize,
    pub grid: usize,
    pub stride: usize,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            patch_size: 6,
            grid: 3,
            stride: 1,
        }
    }
}

impl PoolingConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, v) in [
            ("patch_size", self.patch_size),
            ("grid", self.grid),
            ("stride", self.stride),
        ] {
            if v < 1 {
                return Err(PipelineError::InvalidValue {
                    name,
                    value: v as f64,
                });
            }
        }
        Ok(())
    }
}

/// Everything the end-to-end image encoder needs besides the model.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub pooling: PoolingConfig,
    pub inference: InferenceConfig,
    /// Contrast-normalization regularizer; `None` selects 10 for 0–255 data
    /// and 10/255² for unit-scale data based on the observed range.
    pub contrast_eps: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pooling: PoolingConfig::default(),
            inference: InferenceConfig {
                record_trace: false,
                elbo_tol: 1e-5,
                ..Default::default()
            },
            contrast_eps: None,
        }
    }
}

/// Number of patch positions per axis.
pub fn patch_positions(extent: usize, patch: usize, stride: usize) -> usize {
    (extent - patch) / stride + 1
}

/// All patches at the given stride, row-major over positions, each row the
/// (row, column, channel)-flattened patch.
pub fn extract_patches(
    img: &Image,
    patch: usize,
    stride: usize,
) -> Result<Array2<f64>, PipelineError> {
    if patch > img.height() {
        return Err(PipelineError::PatchTooLarge {
            patch,
            extent: img.height(),
        });
    }
    if patch > img.width() {
        return Err(PipelineError::PatchTooLarge {
            patch,
            extent: img.width(),
        });
    }
    if stride < 1 {
        return Err(PipelineError::InvalidValue {
            name: "stride",
            value: stride as f64,
        });
    }
    let c = img.channels();
    let rows_y = patch_positions(img.height(), patch, stride);
    let rows_x = patch_positions(img.width(), patch, stride);
    let dim = patch * patch * c;
    let mut out = Array2::zeros((rows_y * rows_x, dim));
    let mut row = 0usize;
    for py in 0..rows_y {
        for px in 0..rows_x {
            let y0 = py * stride;
            let x0 = px * stride;
            let mut k = 0usize;
            for dy in 0..patch {
                for dx in 0..patch {
                    for ch in 0..c {
                        out[[row, k]] = img.pixels[[y0 + dy, x0 + dx, ch]];
                        k += 1;
                    }
                }
            }
            row += 1;
        }
    }
    Ok(out)
}

/// Contrast-normalization regularizer matched to the data range.
pub fn detect_contrast_eps(rows: &Array2<f64>) -> f64 {
    let max_abs = rows.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max_abs > 2.0 {
        10.0
    } else {
        10.0 / (255.0 * 255.0)
    }
}

/// Per-row contrast normalization: subtract the row mean, divide by
/// sqrt(row variance + eps).
pub fn contrast_normalize_with(rows: &Array2<f64>, eps: f64) -> Array2<f64> {
    let n = rows.ncols();
    let mut out = rows.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / n as f64;
        let mut var = 0.0;
        for x in row.iter() {
            var += (x - mean) * (x - mean);
        }
        var /= n as f64;
        let scale = (var + eps).sqrt();
        for x in row.iter_mut() {
            *x = (*x - mean) / scale;
        }
    }
    out
}

/// Contrast normalization with the regularizer auto-detected from the data
/// range (10 on 0–255 pixels, 10/255² on unit-scale data).
pub fn contrast_normalize(rows: &Array2<f64>) -> Array2<f64> {
    let eps = detect_contrast_eps(rows);
    log::debug!("contrast normalization eps = {eps:.6e} (auto-detected)");
    contrast_normalize_with(rows, eps)
}

/// Fits ZCA whitening U (Λ + εI)^(−1/2) Uᵀ from the patch covariance.
pub fn fit_zca(rows: &Array2<f64>, epsilon: f64) -> Result<WhiteningTransform, PipelineError> {
    let m = rows.nrows();
    let p = rows.ncols();
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(PipelineError::InvalidValue {
            name: "epsilon",
            value: epsilon,
        });
    }
    if m < p + 1 {
        return Err(PipelineError::InsufficientPatches {
            needed: p + 1,
            got: m,
        });
    }
    let mean = rows.mean_axis(ndarray::Axis(0)).expect("m >= 1");
    let centered = rows - &mean;
    // Covariance with the 1/M convention.
    let cov = centered.t().dot(&centered) / m as f64;

    let cov_na = DMatrix::from_row_iterator(p, p, cov.iter().cloned());
    let eig = SymmetricEigen::new(cov_na);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if epsilon == 0.0 && min_eig < 1e-12 {
        return Err(PipelineError::RankDeficient {
            eigenvalue: min_eig,
        });
    }
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let lam = eig.eigenvalues[k].max(0.0);
        col *= 1.0 / (lam + epsilon).sqrt();
    }
    let zca_na = &scaled * eig.eigenvectors.transpose();
    let mut zca = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            // Symmetrize to kill rounding asymmetry.
            zca[[i, j]] = 0.5 * (zca_na[(i, j)] + zca_na[(j, i)]);
        }
    }
    Ok(WhiteningTransform {
        mean,
        zca,
        epsilon,
    })
}

/// Centers rows with the stored mean and applies the ZCA matrix.
pub fn apply_zca(
    t: &WhiteningTransform,
    rows: &Array2<f64>,
) -> Result<Array2<f64>, PipelineError> {
    if rows.ncols() != t.mean.len() {
        return Err(PipelineError::DimMismatch(format!(
            "patch dim {} vs whitening dim {}",
            rows.ncols(),
            t.mean.len()
        )));
    }
    Ok((rows - &t.mean).dot(&t.zca))
}

/// Runs the E-step on every patch row and returns the spike means E_Q[h].
pub fn encode_patches(
    params: &ModelParams,
    rows: &Array2<f64>,
    cfg: &InferenceConfig,
) -> Result<Array2<f64>, PipelineError> {
    if rows.ncols() != params.d() {
        return Err(PipelineError::DimMismatch(format!(
            "patch dim {} vs model D {}",
            rows.ncols(),
            params.d()
        )));
    }
    let batch = VisibleBatch::new(rows.clone())?;
    let (q, _) = inference::e_step(params, &batch, cfg)?;
    Ok(q.h_hat)
}

/// Contiguous split of `len` positions into `regions` intervals; trailing
/// regions absorb the remainder.
fn region_bounds(len: usize, regions: usize) -> Vec<(usize, usize)> {
    let base = len / regions;
    let rem = len % regions;
    let mut bounds = Vec::with_capacity(regions);
    let mut start = 0usize;
    for r in 0..regions {
        let size = if r >= regions - rem { base + 1 } else { base };
        bounds.push((start, start + size));
        start += size;
    }
    bounds
}

/// Averages position features over a g × g grid of contiguous regions and
/// concatenates the region vectors in row-major region order.
pub fn pool_features(
    features: &Array2<f64>,
    rows: usize,
    cols: usize,
    grid: usize,
) -> Result<Array1<f64>, PipelineError> {
    if features.nrows() != rows * cols {
        return Err(PipelineError::DimMismatch(format!(
            "{} feature rows vs {}x{} positions",
            features.nrows(),
            rows,
            cols
        )));
    }
    if grid > rows {
        return Err(PipelineError::GridTooFine {
            grid,
            positions: rows,
        });
    }
    if grid > cols {
        return Err(PipelineError::GridTooFine {
            grid,
            positions: cols,
        });
    }
    let n = features.ncols();
    let row_bounds = region_bounds(rows, grid);
    let col_bounds = region_bounds(cols, grid);
    let mut out = Array1::zeros(grid * grid * n);
    for (gy, &(y0, y1)) in row_bounds.iter().enumerate() {
        for (gx, &(x0, x1)) in col_bounds.iter().enumerate() {
            let region = gy * grid + gx;
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    let pos = y * cols + x;
                    for k in 0..n {
                        out[region * n + k] += features[[pos, k]];
                    }
                }
            }
            for k in 0..n {
                out[region * n + k] /= count;
            }
        }
    }
    Ok(out)
}

/// The full protocol on one image: patches → contrast normalization → ZCA →
/// encoding → grid pooling. Output length is grid² · N.
pub fn extract_image_features(
    params: &ModelParams,
    whitening: &WhiteningTransform,
    img: &Image,
    cfg: &PipelineConfig,
) -> Result<Array1<f64>, PipelineError> {
    cfg.pooling.validate()?;
    let patches = extract_patches(img, cfg.pooling.patch_size, cfg.pooling.stride)?;
    let normalized = match cfg.contrast_eps {
        Some(eps) => contrast_normalize_with(&patches, eps),
        None => contrast_normalize(&patches),
    };
    let whitened = apply_zca(whitening, &normalized)?;
    let encoded = encode_patches(params, &whitened, &cfg.inference)?;
    let rows = patch_positions(img.height(), cfg.pooling.patch_size, cfg.pooling.stride);
    let cols = patch_positions(img.width(), cfg.pooling.patch_size, cfg.pooling.stride);
    pool_features(&encoded, rows, cols, cfg.pooling.grid)
}
