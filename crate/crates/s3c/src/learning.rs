//! Variational EM: gradient M-step on the energy functional with Q held
//! fixed, unit-norm projection of the dictionary, and the minibatch loop.
//!
//! The Q distribution is frozen during the M-step: the per-unit slab
//! variances entering the moments are evaluated once with the pre-step
//! parameters and treated as constants, so the gradient is that of the energy
//! functional at fixed Q.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;
use thiserror::Error;

use crate::inference::{self, InferError, InferenceConfig, VariationalState};
use crate::math::{binary_entropy, logit, sigmoid, softplus, LN_2PI};
use crate::model::{ModelError, ModelParams, VisibleBatch};

/// Rows per accumulation chunk; fixed so gradient reductions are bitwise
/// reproducible for any worker count.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("non-finite gradient in {group}")]
    NonFiniteGradient { group: &'static str },
    #[error("dictionary column {0} collapsed to zero norm")]
    ZeroColumn(usize),
    #[error("training data is empty")]
    EmptyData,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error(transparent)]
    Inference(#[from] InferError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<LearnError>,
    },
}

impl LearnError {
    /// True when the failure is a numerical blow-up rather than bad input.
    pub fn is_divergence(&self) -> bool {
        match self {
            LearnError::NonFiniteGradient { .. } => true,
            LearnError::Inference(InferError::NumericalDivergence { .. }) => true,
            LearnError::AtStep { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

/// Step sizes per parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub w: f64,
    pub b: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            w: 1e-2,
            b: 1e-2,
            mu: 1e-2,
            alpha: 1e-3,
            beta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub rates: LearningRates,
    pub inference: InferenceConfig,
    pub seed: u64,
    /// Lower bound applied to alpha and beta after every step.
    pub alpha_beta_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            epochs: 1,
            rates: LearningRates::default(),
            inference: InferenceConfig::default(),
            seed: 0,
            alpha_beta_floor: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.batch_size < 1 {
            return Err(LearnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        for (name, r) in [
            ("w", self.rates.w),
            ("b", self.rates.b),
            ("mu", self.rates.mu),
            ("alpha", self.rates.alpha),
            ("beta", self.rates.beta),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(LearnError::InvalidConfig(format!(
                    "learning rate for {name} must be positive, got {r}"
                )));
            }
        }
        if !(self.alpha_beta_floor > 0.0) {
            return Err(LearnError::InvalidConfig(
                "alpha_beta_floor must be positive".into(),
            ));
        }
        self.inference.validate()?;
        Ok(())
    }
}

/// Gradient of the batch-mean energy functional, one field per group.
#[derive(Debug, Clone)]
pub struct ParamGradients {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub mu: Array1<f64>,
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Q frozen as plain numbers: spike/slab means plus the per-unit conditional
/// variances captured from the pre-step parameters.
#[derive(Debug, Clone)]
pub struct FrozenQ {
    pub h_hat: Array2<f64>,
    pub s_hat: Array2<f64>,
    pub var_on: Array1<f64>,
    pub var_off: Array1<f64>,
}

impl FrozenQ {
    pub fn capture(params: &ModelParams, q: &VariationalState) -> Self {
        let w2 = params.col_beta_norms();
        let n = params.n();
        let mut var_on = Array1::zeros(n);
        let mut var_off = Array1::zeros(n);
        for i in 0..n {
            var_on[i] = 1.0 / (params.alpha()[i] + w2[i]);
            var_off[i] = 1.0 / params.alpha()[i];
        }
        Self {
            h_hat: q.h_hat.clone(),
            s_hat: q.s_hat.clone(),
            var_on,
            var_off,
        }
    }
}

/// Parameter values without the model invariants, for evaluating the frozen
/// objective off the unit-norm manifold (finite differences step there).
#[derive(Debug, Clone)]
pub struct FreeParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub mu: Array1<f64>,
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
}

impl From<&ModelParams> for FreeParams {
    fn from(p: &ModelParams) -> Self {
        Self {
            w: p.w().clone(),
            b: p.b().clone(),
            mu: p.mu().clone(),
            alpha: p.alpha().clone(),
            beta: p.beta().clone(),
        }
    }
}

/// Batch-mean energy functional E_Q[log p_θ(v, s, h)] + H(Q) with Q frozen.
///
/// This is exactly the function whose gradient `m_step_gradients` returns;
/// evaluated at the capture parameters it coincides with the batch-mean ELBO.
pub fn frozen_energy_functional(
    theta: &FreeParams,
    frozen: &FrozenQ,
    batch: &VisibleBatch,
) -> f64 {
    let m = batch.len();
    let n = theta.w.ncols();
    let d = theta.w.nrows();
    let v_mat = batch.matrix();
    let mut total = 0.0;
    for r in 0..m {
        let h = frozen.h_hat.row(r);
        let s = frozen.s_hat.row(r);
        let u = Array1::from_iter(h.iter().zip(s.iter()).map(|(&a, &b)| a * b));
        let recon = theta.w.dot(&u);
        let mut lp = 0.0;
        for dd in 0..d {
            let resid = v_mat[[r, dd]] - recon[dd];
            let mut w2c = 0.0;
            for i in 0..n {
                let c = h[i] * (s[i] * s[i] + frozen.var_on[i]) - (h[i] * s[i]) * (h[i] * s[i]);
                w2c += theta.w[[dd, i]] * theta.w[[dd, i]] * c;
            }
            lp += 0.5 * (theta.beta[dd].ln() - LN_2PI)
                - 0.5 * theta.beta[dd] * (resid * resid + w2c);
        }
        for i in 0..n {
            let ds = s[i] - theta.mu[i];
            let second = h[i] * (ds * ds + frozen.var_on[i]) + (1.0 - h[i]) * frozen.var_off[i];
            lp += 0.5 * (theta.alpha[i].ln() - LN_2PI) - 0.5 * theta.alpha[i] * second;
            lp += h[i] * theta.b[i] - softplus(theta.b[i]);
            // Entropy of the frozen Q; constant in θ.
            lp += binary_entropy(h[i])
                + h[i] * 0.5 * (LN_2PI + 1.0 + frozen.var_on[i].ln())
                + (1.0 - h[i]) * 0.5 * (LN_2PI + 1.0 + frozen.var_off[i].ln());
        }
        total += lp;
    }
    total / m as f64
}

struct GradAccum {
    w: Array2<f64>,
    b: Array1<f64>,
    mu: Array1<f64>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
    c_sum: Array1<f64>,
}

impl GradAccum {
    fn zeros(d: usize, n: usize) -> Self {
        Self {
            w: Array2::zeros((d, n)),
            b: Array1::zeros(n),
            mu: Array1::zeros(n),
            alpha: Array1::zeros(n),
            beta: Array1::zeros(d),
            c_sum: Array1::zeros(n),
        }
    }

    fn merge(mut self, other: GradAccum) -> Self {
        self.w += &other.w;
        self.b += &other.b;
        self.mu += &other.mu;
        self.alpha += &other.alpha;
        self.beta += &other.beta;
        self.c_sum += &other.c_sum;
        self
    }
}

/// Gradient of the batch-mean energy functional with respect to every
/// parameter group, using the closed-form moments of the factorial family.
pub fn m_step_gradients(
    params: &ModelParams,
    batch: &VisibleBatch,
    q: &VariationalState,
) -> Result<ParamGradients, LearnError> {
    let d = params.d();
    let n = params.n();
    let m = batch.len();
    if batch.dim() != d {
        return Err(LearnError::DimMismatch(format!(
            "batch dim {} vs model D {}",
            batch.dim(),
            d
        )));
    }
    if q.len() != m || q.h_hat.ncols() != n {
        return Err(LearnError::DimMismatch(format!(
            "variational state {}x{} vs batch {}x{}",
            q.len(),
            q.h_hat.ncols(),
            m,
            n
        )));
    }
    if m == 0 {
        return Err(LearnError::EmptyData);
    }

    let frozen = FrozenQ::capture(params, q);
    let w_sq = params.w().mapv(|x| x * x);
    let v_mat = batch.matrix();
    let sigma_b = params.b().mapv(sigmoid);

    let indices: Vec<usize> = (0..m).collect();
    let partials: Vec<GradAccum> = indices
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = GradAccum::zeros(d, n);
            for &r in chunk {
                let h = frozen.h_hat.row(r);
                let s = frozen.s_hat.row(r);
                let mut u = Array1::zeros(n);
                let mut c = Array1::zeros(n);
                for i in 0..n {
                    u[i] = h[i] * s[i];
                    c[i] = h[i] * (s[i] * s[i] + frozen.var_on[i]) - u[i] * u[i];
                }
                let recon = params.w().dot(&u);
                let wc = w_sq.dot(&c);
                for dd in 0..d {
                    let resid = v_mat[[r, dd]] - recon[dd];
                    let t = params.beta()[dd] * resid;
                    for i in 0..n {
                        acc.w[[dd, i]] += t * u[i];
                    }
                    let r_d = resid * resid + wc[dd];
                    acc.beta[dd] += 0.5 * (1.0 / params.beta()[dd] - r_d);
                }
                for i in 0..n {
                    acc.b[i] += h[i] - sigma_b[i];
                    acc.mu[i] += params.alpha()[i] * h[i] * (s[i] - params.mu()[i]);
                    let ds = s[i] - params.mu()[i];
                    let second =
                        h[i] * (ds * ds + frozen.var_on[i]) + (1.0 - h[i]) * frozen.var_off[i];
                    acc.alpha[i] += 0.5 * (1.0 / params.alpha()[i] - second);
                }
                acc.c_sum += &c;
            }
            acc
        })
        .collect();

    let mut acc = partials
        .into_iter()
        .fold(GradAccum::zeros(d, n), GradAccum::merge);

    // The −β_d W_di c_i term of dW is linear in Σ c, applied once.
    for dd in 0..d {
        for i in 0..n {
            acc.w[[dd, i]] -= params.beta()[dd] * params.w()[[dd, i]] * acc.c_sum[i];
        }
    }

    let scale = 1.0 / m as f64;
    let mut grads = ParamGradients {
        w: acc.w * scale,
        b: acc.b * scale,
        mu: acc.mu * scale,
        alpha: acc.alpha * scale,
        beta: acc.beta * scale,
    };
    if params.beta_tied() {
        let mean = grads.beta.mean().unwrap_or(0.0);
        grads.beta.fill(mean);
    }

    for (group, finite) in [
        ("W", grads.w.iter().all(|x| x.is_finite())),
        ("b", grads.b.iter().all(|x| x.is_finite())),
        ("mu", grads.mu.iter().all(|x| x.is_finite())),
        ("alpha", grads.alpha.iter().all(|x| x.is_finite())),
        ("beta", grads.beta.iter().all(|x| x.is_finite())),
    ] {
        if !finite {
            return Err(LearnError::NonFiniteGradient { group });
        }
    }
    Ok(grads)
}

/// Ascent step on every group, then unit-norm projection of the dictionary
/// columns and flooring of the precisions. The result always satisfies the
/// model invariants.
pub fn apply_m_step(
    params: &ModelParams,
    grads: &ParamGradients,
    rates: &LearningRates,
    floor: f64,
) -> Result<ModelParams, LearnError> {
    let d = params.d();
    let n = params.n();
    let mut w = params.w() + &(&grads.w * rates.w);
    for j in 0..n {
        let norm = w.column(j).dot(&w.column(j)).sqrt();
        if norm < 1e-12 {
            return Err(LearnError::ZeroColumn(j));
        }
        for dd in 0..d {
            w[[dd, j]] /= norm;
        }
    }
    let b = params.b() + &(&grads.b * rates.b);
    let mu = params.mu() + &(&grads.mu * rates.mu);
    let alpha = (params.alpha() + &(&grads.alpha * rates.alpha)).mapv(|x| x.max(floor));
    let mut beta = (params.beta() + &(&grads.beta * rates.beta)).mapv(|x| x.max(floor));
    if params.beta_tied() {
        let mean = beta.mean().unwrap_or(1.0);
        beta.fill(mean);
    }
    Ok(ModelParams::new(w, b, mu, alpha, beta, params.beta_tied())?)
}

/// Starting point for `train_em`.
#[derive(Debug, Clone)]
pub enum TrainInit {
    Params(ModelParams),
    Random(RandomInit),
}

/// Random initialization: Gaussian dictionary with normalized columns, biases
/// at the target sparsity, unit slab and visible precisions.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct RandomInit {
    pub n: usize,
    pub target_sparsity: f64,
    pub beta_tied: bool,
}

impl RandomInit {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            target_sparsity: 0.05,
            beta_tied: false,
        }
    }
}

pub fn random_init(d: usize, spec: &RandomInit, seed: u64) -> Result<ModelParams, LearnError> {
    if !(spec.target_sparsity > 0.0 && spec.target_sparsity < 1.0) {
        return Err(LearnError::InvalidConfig(format!(
            "target_sparsity must be in (0, 1), got {}",
            spec.target_sparsity
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let mut w = Array2::zeros((d, n));
    for j in 0..n {
        let mut norm = 0.0;
        for dd in 0..d {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            w[[dd, j]] = z;
            norm += z * z;
        }
        let norm = norm.sqrt().max(1e-12);
        for dd in 0..d {
            w[[dd, j]] /= norm;
        }
    }
    let b = Array1::from_elem(n, logit(spec.target_sparsity));
    Ok(ModelParams::new(
        w,
        b,
        Array1::ones(n),
        Array1::ones(n),
        Array1::ones(d),
        spec.beta_tied,
    )?)
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct TrainRecord {
    pub step: usize,
    pub elbo: f64,
    pub mean_sparsity: f64,
    pub wall_ms: f64,
}

/// Minibatch variational EM: E-step, frozen-Q gradients, projected ascent.
/// Deterministic for a fixed seed; shuffling is driven by the config seed
/// only.
pub fn train_em(
    data: &VisibleBatch,
    cfg: &TrainConfig,
    init: TrainInit,
) -> Result<(ModelParams, Vec<TrainRecord>), LearnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::EmptyData);
    }
    let mut params = match init {
        TrainInit::Params(p) => {
            p.validate()?;
            p
        }
        TrainInit::Random(spec) => random_init(data.dim(), &spec, cfg.seed)?,
    };

    let m = data.len();
    let v_mat = data.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let started = Instant::now();
            let mut mb = Array2::zeros((chunk.len(), data.dim()));
            for (r, &src) in chunk.iter().enumerate() {
                mb.row_mut(r).assign(&v_mat.row(src));
            }
            let mb = VisibleBatch::new(mb).expect("training rows are finite");
            let at = |e: LearnError| LearnError::AtStep {
                step,
                source: Box::new(e),
            };
            let (q, _) = inference::e_step(&params, &mb, &cfg.inference)
                .map_err(|e| at(e.into()))?;
            let elbo = inference::batch_elbo_mean(&params, &mb, &q);
            let grads = m_step_gradients(&params, &mb, &q).map_err(at)?;
            params = apply_m_step(&params, &grads, &cfg.rates, cfg.alpha_beta_floor)
                .map_err(at)?;
            records.push(TrainRecord {
                step,
                elbo,
                mean_sparsity: q.sparsity(0.01),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
            step += 1;
        }
    }
    Ok((params, records))
}
