//! Ground-truth inference for small N by exhaustive enumeration over the
//! spike configurations, with closed-form Gaussian slab posteriors per
//! configuration. Exists to certify the variational E-step: the fitted family
//! can be compared against the exact posterior and the exact log evidence.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::inference;
use crate::math::{logsumexp, softplus, LN_2PI};
use crate::model::ModelParams;

/// Enumeration cost is 2^N Gaussian solves; beyond this the oracle refuses.
pub const MAX_ORACLE_UNITS: usize = 14;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("exact enumeration supports at most {MAX_ORACLE_UNITS} units, got {0}")]
    TooManyUnits(usize),
    #[error("slab posterior precision is not positive definite for configuration {0}")]
    NotPositiveDefinite(usize),
    #[error("v has dimension {got}, model expects {expected}")]
    DimMismatch { expected: usize, got: usize },
}

/// Exact posterior over the 2^N spike configurations for one example.
///
/// Configuration `c` activates unit `i` iff bit `i` of `c` is set. Inactive
/// units keep their prior slab distribution; active units share a joint
/// Gaussian slab posterior obtained by conjugacy.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    pub log_evidence: f64,
    /// log p(h | v) per configuration, indexed by bitmask.
    pub config_log_probs: Vec<f64>,
    /// Posterior slab mean per configuration (zeros at inactive units).
    pub config_means: Vec<Array1<f64>>,
    /// Posterior slab covariance per configuration (prior variance on the
    /// diagonal at inactive units).
    pub config_covs: Vec<Array2<f64>>,
}

impl ExactPosterior {
    /// Posterior marginal activation probabilities E[h_i | v].
    pub fn marginal_h(&self) -> Array1<f64> {
        let n_cfg = self.config_log_probs.len();
        let n = self.config_means.first().map_or(0, |m| m.len());
        let mut out = Array1::zeros(n);
        for c in 0..n_cfg {
            let p = self.config_log_probs[c].exp();
            for i in 0..n {
                if c >> i & 1 == 1 {
                    out[i] += p;
                }
            }
        }
        out
    }

    /// Most probable spike configuration (bitmask).
    pub fn map_config(&self) -> usize {
        self.config_log_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap_or(0)
    }
}

/// Enumerates p(h | v) exactly and assembles the evidence by logsumexp.
pub fn exact_posterior(params: &ModelParams, v: ArrayView1<f64>) -> Result<ExactPosterior, OracleError> {
    let n = params.n();
    let d = params.d();
    if n > MAX_ORACLE_UNITS {
        return Err(OracleError::TooManyUnits(n));
    }
    if v.len() != d {
        return Err(OracleError::DimMismatch {
            expected: d,
            got: v.len(),
        });
    }

    // Terms shared by every configuration.
    let mut base = 0.0;
    let mut v_beta_v = 0.0;
    for dd in 0..d {
        base += 0.5 * (params.beta()[dd].ln() - LN_2PI);
        v_beta_v += params.beta()[dd] * v[dd] * v[dd];
    }
    let prior_norm: f64 = params.b().iter().map(|&b| softplus(b)).sum();

    let n_cfg = 1usize << n;
    let per_cfg: Vec<Result<(f64, Array1<f64>, Array2<f64>), OracleError>> = (0..n_cfg)
        .into_par_iter()
        .map(|cfg| {
            let active: Vec<usize> = (0..n).filter(|&i| cfg >> i & 1 == 1).collect();
            let k = active.len();

            let mut mean = Array1::zeros(n);
            let mut cov = Array2::zeros((n, n));
            for i in 0..n {
                cov[[i, i]] = 1.0 / params.alpha()[i];
            }

            let mut log_pv_given_h = base - 0.5 * v_beta_v;
            if k > 0 {
                // Λ = diag(α_A) + W_Aᵀ β W_A, rhs = W_Aᵀ β v + α_A μ_A.
                let mut lambda = DMatrix::zeros(k, k);
                let mut rhs = DVector::zeros(k);
                for (a, &i) in active.iter().enumerate() {
                    for (b, &j) in active.iter().enumerate() {
                        let mut dot = 0.0;
                        for dd in 0..d {
                            dot += params.w()[[dd, i]] * params.beta()[dd] * params.w()[[dd, j]];
                        }
                        lambda[(a, b)] = dot + if a == b { params.alpha()[i] } else { 0.0 };
                    }
                    let mut wv = 0.0;
                    for dd in 0..d {
                        wv += params.w()[[dd, i]] * params.beta()[dd] * v[dd];
                    }
                    rhs[a] = wv + params.alpha()[i] * params.mu()[i];
                }
                let chol = Cholesky::new(lambda.clone())
                    .ok_or(OracleError::NotPositiveDefinite(cfg))?;
                let m = chol.solve(&rhs);
                let log_det: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
                let sigma = chol.inverse();

                let mut ln_alpha = 0.0;
                let mut mu_alpha_mu = 0.0;
                for &i in &active {
                    ln_alpha += params.alpha()[i].ln();
                    mu_alpha_mu += params.alpha()[i] * params.mu()[i] * params.mu()[i];
                }
                log_pv_given_h += 0.5 * ln_alpha - 0.5 * log_det - 0.5 * mu_alpha_mu
                    + 0.5 * m.dot(&rhs);

                for (a, &i) in active.iter().enumerate() {
                    mean[i] = m[a];
                    for (b, &j) in active.iter().enumerate() {
                        cov[[i, j]] = sigma[(a, b)];
                    }
                }
            }

            let mut log_ph = -prior_norm;
            for &i in &active {
                log_ph += params.b()[i];
            }
            Ok((log_pv_given_h + log_ph, mean, cov))
        })
        .collect();

    let mut unnorm = Vec::with_capacity(n_cfg);
    let mut config_means = Vec::with_capacity(n_cfg);
    let mut config_covs = Vec::with_capacity(n_cfg);
    for r in per_cfg {
        let (lp, mean, cov) = r?;
        unnorm.push(lp);
        config_means.push(mean);
        config_covs.push(cov);
    }
    let log_evidence = logsumexp(&unnorm);
    let config_log_probs = unnorm.iter().map(|x| x - log_evidence).collect();
    Ok(ExactPosterior {
        log_evidence,
        config_log_probs,
        config_means,
        config_covs,
    })
}

/// D_KL(Q ‖ P(h, s | v)) = log p(v) − ELBO(Q). Nonnegative up to rounding.
pub fn kl_q_to_exact(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
) -> Result<f64, OracleError> {
    let exact = exact_posterior(params, v)?;
    Ok(exact.log_evidence - inference::elbo(params, v, h_hat, s_hat))
}

/// Monte-Carlo estimate of the ELBO: mean and standard error of
/// log p(v, s, h) − log Q(h, s) over draws from Q. Validates the closed-form
/// moment ledger used by `inference::elbo`.
pub fn mc_elbo_estimate(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
    n_samples: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(n_samples >= 1);
    let n = params.n();
    let w2 = params.col_beta_norms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_samples);
    let v_owned = v.to_owned();
    for _ in 0..n_samples {
        let mut h = Array1::from_elem(n, false);
        let mut s = Array1::zeros(n);
        let mut log_q = 0.0;
        for i in 0..n {
            let p = h_hat[i];
            h[i] = rng.random_bool(p);
            log_q += if h[i] { p.ln() } else { (1.0 - p).ln() };
            let (mean, var) = if h[i] {
                (s_hat[i], 1.0 / (params.alpha()[i] + w2[i]))
            } else {
                (0.0, 1.0 / params.alpha()[i])
            };
            let z: f64 = rng.sample(StandardNormal);
            s[i] = mean + z * var.sqrt();
            let ds = s[i] - mean;
            log_q += -0.5 * (LN_2PI + var.ln()) - 0.5 * ds * ds / var;
        }
        let state = crate::model::LatentState::new(h, s);
        let lp = params
            .log_joint(&v_owned, &state)
            .expect("dimensions checked by construction");
        values.push(lp - log_q);
    }
    let mean = values.iter().sum::<f64>() / n_samples as f64;
    let var = if n_samples > 1 {
        values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_samples as f64 - 1.0)
    } else {
        0.0
    };
    (mean, (var / n_samples as f64).sqrt())
}
