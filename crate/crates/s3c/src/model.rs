//! The spike-and-slab generative model: parameters, energy and log-joint
//! evaluation, ancestral sampling, and closed-form prior moments.
//!
//! Each of the `N` hidden units pairs a binary spike `h_i` with a real slab
//! `s_i`; the unit's state is the product `h_i * s_i`. Visibles are Gaussian
//! around `W (h ∘ s)` with diagonal precision.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::math::{sigmoid, softplus, LN_2PI};

/// Column-norm slack tolerated by validation.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// Which precision vector an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionKind {
    Alpha,
    Beta,
}

impl std::fmt::Display for PrecisionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrecisionKind::Alpha => write!(f, "alpha"),
            PrecisionKind::Beta => write!(f, "beta"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("column {column} of W has norm {norm}, expected 1")]
    NonUnitColumn { column: usize, norm: f64 },
    #[error("{kind}[{index}] must be strictly positive")]
    NonPositivePrecision { kind: PrecisionKind, index: usize },
    #[error("{field}[{index}] is not finite")]
    NonFinite { field: &'static str, index: usize },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Immutable parameter set of the model.
///
/// `w` is `D × N` with unit-norm columns, `b` are spike biases, `mu` slab
/// means, `alpha` slab precisions, and `beta` visible precisions (diagonal,
/// optionally tied to a scalar during learning).
#[derive(Debug, Clone)]
pub struct ModelParams {
    w: Array2<f64>,
    b: Array1<f64>,
    mu: Array1<f64>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
    beta_tied: bool,
}

impl ModelParams {
    /// Builds a parameter set, rejecting anything that violates the model
    /// invariants (unit columns, positive precisions, finite entries).
    pub fn new(
        w: Array2<f64>,
        b: Array1<f64>,
        mu: Array1<f64>,
        alpha: Array1<f64>,
        beta: Array1<f64>,
        beta_tied: bool,
    ) -> Result<Self, ModelError> {
        let params = Self {
            w,
            b,
            mu,
            alpha,
            beta,
            beta_tied,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks every structural invariant, naming the first violation found.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (d, n) = self.w.dim();
        for (name, arr, len) in [
            ("b", &self.b, n),
            ("mu", &self.mu, n),
            ("alpha", &self.alpha, n),
            ("beta", &self.beta, d),
        ] {
            if arr.len() != len {
                return Err(ModelError::DimMismatch {
                    what: name,
                    expected: len,
                    got: arr.len(),
                });
            }
        }
        for (i, x) in self.w.iter().enumerate() {
            if !x.is_finite() {
                return Err(ModelError::NonFinite {
                    field: "W",
                    index: i,
                });
            }
        }
        for (name, arr) in [("b", &self.b), ("mu", &self.mu)] {
            if let Some(i) = arr.iter().position(|x| !x.is_finite()) {
                return Err(ModelError::NonFinite {
                    field: name,
                    index: i,
                });
            }
        }
        for (kind, name, arr) in [
            (PrecisionKind::Alpha, "alpha", &self.alpha),
            (PrecisionKind::Beta, "beta", &self.beta),
        ] {
            for (i, &x) in arr.iter().enumerate() {
                if !x.is_finite() {
                    return Err(ModelError::NonFinite {
                        field: name,
                        index: i,
                    });
                }
                if x <= 0.0 {
                    return Err(ModelError::NonPositivePrecision { kind, index: i });
                }
            }
        }
        for j in 0..n {
            let norm = self.w.column(j).dot(&self.w.column(j)).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(ModelError::NonUnitColumn { column: j, norm });
            }
        }
        Ok(())
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn b(&self) -> &Array1<f64> {
        &self.b
    }

    pub fn mu(&self) -> &Array1<f64> {
        &self.mu
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn beta_tied(&self) -> bool {
        self.beta_tied
    }

    /// Visible dimension D.
    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    /// Number of hidden units N.
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    /// Per-unit norms WᵢᵀβWᵢ of the dictionary columns under the visible
    /// precision. Appears in every variational update, so it is computed once
    /// per call site.
    pub fn col_beta_norms(&self) -> Array1<f64> {
        let mut w2 = Array1::zeros(self.n());
        for j in 0..self.n() {
            let col = self.w.column(j);
            w2[j] = col
                .iter()
                .zip(self.beta.iter())
                .map(|(&wdj, &bd)| bd * wdj * wdj)
                .sum();
        }
        w2
    }

    /// Energy E(v, s, h): weighted reconstruction error, slab deviation from
    /// the gated mean, and the spike bias term.
    pub fn energy(&self, v: &Array1<f64>, state: &LatentState) -> Result<f64, ModelError> {
        self.check_dims(v, state)?;
        let u = state.gated();
        let recon = self.w.dot(&u);
        let mut e = 0.0;
        for d in 0..self.d() {
            let r = v[d] - recon[d];
            e += 0.5 * self.beta[d] * r * r;
        }
        for i in 0..self.n() {
            let hi = if state.h[i] { 1.0 } else { 0.0 };
            let ds = state.s[i] - self.mu[i] * hi;
            e += 0.5 * self.alpha[i] * ds * ds;
            e -= self.b[i] * hi;
        }
        Ok(e)
    }

    /// log p(v, s, h) with exact Bernoulli/Gaussian normalizers.
    ///
    /// Equals −E(v,s,h) plus a term that depends only on the parameters, which
    /// is what makes the directed form's partition function tractable.
    pub fn log_joint(&self, v: &Array1<f64>, state: &LatentState) -> Result<f64, ModelError> {
        self.check_dims(v, state)?;
        let mut lp = 0.0;
        // log p(h) = Σ h_i b_i − softplus(b_i)
        for i in 0..self.n() {
            let hi = if state.h[i] { 1.0 } else { 0.0 };
            lp += hi * self.b[i] - softplus(self.b[i]);
        }
        // log p(s | h)
        for i in 0..self.n() {
            let hi = if state.h[i] { 1.0 } else { 0.0 };
            let ds = state.s[i] - self.mu[i] * hi;
            lp += 0.5 * (self.alpha[i].ln() - LN_2PI) - 0.5 * self.alpha[i] * ds * ds;
        }
        // log p(v | s, h)
        let recon = self.w.dot(&state.gated());
        for d in 0..self.d() {
            let r = v[d] - recon[d];
            lp += 0.5 * (self.beta[d].ln() - LN_2PI) - 0.5 * self.beta[d] * r * r;
        }
        Ok(lp)
    }

    /// Draws `m` independent (h, s, v) triples by ancestral sampling.
    ///
    /// Each example uses its own counter stream of a seeded ChaCha generator,
    /// so the result is reproducible and independent of how rows are scheduled
    /// across threads.
    pub fn sample_ancestral(&self, seed: u64, m: usize) -> AncestralSample {
        assert!(m >= 1, "sample count must be at least 1");
        let rows: Vec<(Vec<bool>, Vec<f64>, Vec<f64>)> = (0..m)
            .into_par_iter()
            .map(|row| self.sample_one(seed, row as u64))
            .collect();

        let mut h = Array2::from_elem((m, self.n()), false);
        let mut s = Array2::zeros((m, self.n()));
        let mut v = Array2::zeros((m, self.d()));
        for (r, (hr, sr, vr)) in rows.into_iter().enumerate() {
            for i in 0..self.n() {
                h[[r, i]] = hr[i];
                s[[r, i]] = sr[i];
            }
            for d in 0..self.d() {
                v[[r, d]] = vr[d];
            }
        }
        AncestralSample {
            v: VisibleBatch::new(v).expect("sampled visibles are finite"),
            h,
            s,
        }
    }

    fn sample_one(&self, seed: u64, row: u64) -> (Vec<bool>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row);
        let n = self.n();
        let d = self.d();
        let mut h = vec![false; n];
        let mut s = vec![0.0; n];
        for i in 0..n {
            h[i] = rng.random_bool(sigmoid(self.b[i]));
            let z: f64 = rng.sample(StandardNormal);
            let mean = if h[i] { self.mu[i] } else { 0.0 };
            s[i] = mean + z / self.alpha[i].sqrt();
        }
        let mut v = vec![0.0; d];
        for i in 0..n {
            if h[i] {
                for dd in 0..d {
                    v[dd] += self.w[[dd, i]] * s[i];
                }
            }
        }
        for vd in v.iter_mut().take(d).enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *vd.1 += z / self.beta[vd.0].sqrt();
        }
        (h, s, v)
    }

    /// Closed-form prior moments; the Monte-Carlo oracle for `sample_ancestral`.
    pub fn analytic_moments(&self) -> PriorMoments {
        let n = self.n();
        let d = self.d();
        let mut e_h = Array1::zeros(n);
        let mut e_s = Array1::zeros(n);
        let mut e_hs = Array1::zeros(n);
        for i in 0..n {
            let p = sigmoid(self.b[i]);
            e_h[i] = p;
            e_s[i] = p * self.mu[i];
            e_hs[i] = p * self.mu[i];
        }
        let mut var_v = Array1::zeros(d);
        for dd in 0..d {
            let mut v = 1.0 / self.beta[dd];
            for i in 0..n {
                let p = sigmoid(self.b[i]);
                let second = p * (self.mu[i] * self.mu[i] + 1.0 / self.alpha[i]);
                let mean_sq = (p * self.mu[i]) * (p * self.mu[i]);
                v += self.w[[dd, i]] * self.w[[dd, i]] * (second - mean_sq);
            }
            var_v[dd] = v;
        }
        PriorMoments {
            e_h,
            e_s,
            e_hs,
            var_v,
        }
    }

    fn check_dims(&self, v: &Array1<f64>, state: &LatentState) -> Result<(), ModelError> {
        if v.len() != self.d() {
            return Err(ModelError::DimMismatch {
                what: "v",
                expected: self.d(),
                got: v.len(),
            });
        }
        if state.h.len() != self.n() {
            return Err(ModelError::DimMismatch {
                what: "h",
                expected: self.n(),
                got: state.h.len(),
            });
        }
        if state.s.len() != self.n() {
            return Err(ModelError::DimMismatch {
                what: "s",
                expected: self.n(),
                got: state.s.len(),
            });
        }
        Ok(())
    }
}

/// One configuration of the latent variables.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub h: Array1<bool>,
    pub s: Array1<f64>,
}

impl LatentState {
    pub fn new(h: Array1<bool>, s: Array1<f64>) -> Self {
        Self { h, s }
    }

    /// The gated state h ∘ s.
    pub fn gated(&self) -> Array1<f64> {
        Array1::from_iter(
            self.h
                .iter()
                .zip(self.s.iter())
                .map(|(&hi, &si)| if hi { si } else { 0.0 }),
        )
    }
}

/// A batch of visible vectors, one example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleBatch {
    data: Array2<f64>,
}

impl VisibleBatch {
    pub fn new(data: Array2<f64>) -> Result<Self, ModelError> {
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite {
                field: "V",
                index: i,
            });
        }
        Ok(Self { data })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.data
    }
}

/// Output of `sample_ancestral`.
#[derive(Debug, Clone)]
pub struct AncestralSample {
    pub v: VisibleBatch,
    pub h: Array2<bool>,
    pub s: Array2<f64>,
}

/// Closed-form prior moments of the generative process.
#[derive(Debug, Clone)]
pub struct PriorMoments {
    pub e_h: Array1<f64>,
    pub e_s: Array1<f64>,
    pub e_hs: Array1<f64>,
    pub var_v: Array1<f64>,
}
