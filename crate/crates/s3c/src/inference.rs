//! Variational E-step: fits the factorial family Q(h, s) = Π Q(h_i, s_i) to
//! the posterior by parallel damped fixed-point updates, with an optional
//! conjugate-gradient slab mode.
//!
//! Every unit is updated simultaneously from the previous iterate, so the
//! scheme is batch- and unit-parallel. Reflection clipping bounds
//! sign-flipping slab updates, which otherwise can amplify without bound when
//! dictionary columns are strongly correlated.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use thiserror::Error;

use crate::math::{binary_entropy, sigmoid, softplus, LN_2PI};
use crate::model::{ModelParams, VisibleBatch};

/// Spike probabilities are kept strictly inside (0, 1) so entropy terms stay
/// finite even at saturating biases.
pub const H_HAT_MIN: f64 = 1e-7;
pub const H_HAT_MAX: f64 = 1.0 - 1e-7;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("non-finite variational value at iteration {iteration}, unit {unit}")]
    NumericalDivergence { iteration: usize, unit: usize },
    #[error("invalid inference config: {0}")]
    InvalidConfig(String),
    #[error("batch dimension {got} does not match model D = {expected}")]
    DimMismatch { expected: usize, got: usize },
}

/// How the slab means are updated inside the E-step loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlabMode {
    /// Parallel damped update with reflection clipping (default; faster and
    /// reaches equally good solutions).
    Heuristic,
    /// Partial conjugate-gradient minimization of the slab quadratic; each CG
    /// step is guaranteed not to worsen the KL divergence.
    ConjugateGradient,
}

/// Knobs of the fixed-point E-step.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Reflection-clip coefficient ρ ∈ [0, 1].
    pub rho: f64,
    /// Damping for the slab update, in (0, 1].
    pub eta_s: f64,
    /// Damping for the spike update, in (0, 1].
    pub eta_h: f64,
    /// Iteration budget K.
    pub max_iters: usize,
    pub s_mode: SlabMode,
    /// CG steps per slab update in conjugate-gradient mode.
    pub cg_max_steps: usize,
    /// Per-example early stop once the ELBO gain drops below this.
    /// `f64::NEG_INFINITY` disables early stopping.
    pub elbo_tol: f64,
    /// Record per-iteration ELBO/sparsity in the returned trace.
    pub record_trace: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            eta_s: 0.5,
            eta_h: 0.5,
            max_iters: 50,
            s_mode: SlabMode::Heuristic,
            cg_max_steps: 20,
            elbo_tol: 1e-6,
            record_trace: true,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferError> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(InferError::InvalidConfig(format!(
                "rho must be in [0, 1], got {}",
                self.rho
            )));
        }
        for (name, eta) in [("eta_s", self.eta_s), ("eta_h", self.eta_h)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(InferError::InvalidConfig(format!(
                    "{name} must be in (0, 1], got {eta}"
                )));
            }
        }
        if self.max_iters < 1 {
            return Err(InferError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.s_mode == SlabMode::ConjugateGradient && self.cg_max_steps < 1 {
            return Err(InferError::InvalidConfig(
                "cg_max_steps must be >= 1 in conjugate-gradient mode".into(),
            ));
        }
        if self.elbo_tol.is_nan() {
            return Err(InferError::InvalidConfig("elbo_tol must not be NaN".into()));
        }
        Ok(())
    }
}

/// Mean-field parameters, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    /// Spike means ĥ, strictly inside (0, 1). M × N.
    pub h_hat: Array2<f64>,
    /// Slab means ŝ. M × N.
    pub s_hat: Array2<f64>,
}

impl VariationalState {
    pub fn len(&self) -> usize {
        self.h_hat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h_hat.nrows() == 0
    }

    /// Fraction of spike means below `threshold`, over all rows and units.
    pub fn sparsity(&self, threshold: f64) -> f64 {
        let total = self.h_hat.len();
        if total == 0 {
            return 0.0;
        }
        let below = self.h_hat.iter().filter(|&&x| x < threshold).count();
        below as f64 / total as f64
    }
}

/// Per-iteration diagnostics of an E-step run.
///
/// `elbo` and `sparsity` hold one entry for the initialization plus one per
/// completed iteration (at most K+1). `ascent_violations` counts iterations
/// whose batch-mean ELBO decreased; parallel damped updates do not guarantee
/// per-iteration descent of the KL, so violations are reported, not fatal.
#[derive(Debug, Clone, Default)]
pub struct InferenceTrace {
    pub elbo: Vec<f64>,
    pub sparsity: Vec<f64>,
    pub max_abs_s: Vec<f64>,
    pub ascent_violations: usize,
}

/// Quantities reused by every update of one E-step call.
struct InferCtx {
    /// WᵢᵀβWᵢ per unit.
    w2: Array1<f64>,
    /// ½(ln αᵢ − ln(αᵢ + WᵢᵀβWᵢ)).
    half_ln_ratio: Array1<f64>,
    /// Slab posterior variance when the unit is on: (αᵢ + WᵢᵀβWᵢ)⁻¹.
    var_on: Array1<f64>,
    /// Constant part of the ELBO: Gaussian/Bernoulli normalizers.
    log_norm: f64,
}

impl InferCtx {
    fn new(params: &ModelParams) -> Self {
        let w2 = params.col_beta_norms();
        let n = params.n();
        let mut half_ln_ratio = Array1::zeros(n);
        let mut var_on = Array1::zeros(n);
        for i in 0..n {
            let a = params.alpha()[i];
            half_ln_ratio[i] = 0.5 * (a.ln() - (a + w2[i]).ln());
            var_on[i] = 1.0 / (a + w2[i]);
        }
        let mut log_norm = 0.0;
        for d in 0..params.d() {
            log_norm += 0.5 * (params.beta()[d].ln() - LN_2PI);
        }
        for i in 0..n {
            log_norm += 0.5 * (params.alpha()[i].ln() - LN_2PI);
            log_norm -= softplus(params.b()[i]);
        }
        Self {
            w2,
            half_ln_ratio,
            var_on,
            log_norm,
        }
    }
}

fn gated(h: &Array1<f64>, s: &Array1<f64>) -> Array1<f64> {
    h * s
}

/// Residual-projected dictionary response g = Wᵀ(β ∘ (v − W u)).
fn residual_projection(
    params: &ModelParams,
    v: ArrayView1<f64>,
    u: &Array1<f64>,
) -> Array1<f64> {
    let recon = params.w().dot(u);
    let weighted = Array1::from_iter(
        v.iter()
            .zip(recon.iter())
            .zip(params.beta().iter())
            .map(|((&vd, &rd), &bd)| bd * (vd - rd)),
    );
    params.w().t().dot(&weighted)
}

/// Initializes Q at the prior: ĥ = σ(b), ŝ = μ, identical for every row.
pub fn init_q(params: &ModelParams, m: usize) -> VariationalState {
    let n = params.n();
    let mut h_hat = Array2::zeros((m, n));
    let mut s_hat = Array2::zeros((m, n));
    for i in 0..n {
        let h0 = sigmoid(params.b()[i]).clamp(H_HAT_MIN, H_HAT_MAX);
        let s0 = params.mu()[i];
        for r in 0..m {
            h_hat[[r, i]] = h0;
            s_hat[[r, i]] = s0;
        }
    }
    VariationalState { h_hat, s_hat }
}

fn s_star_ctx(
    params: &ModelParams,
    ctx: &InferCtx,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
) -> Array1<f64> {
    let u = gated(h_hat, s_hat);
    let g = residual_projection(params, v, &u);
    let n = params.n();
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let a = params.alpha()[i];
        // The j≠i sum is the full reconstruction minus the unit's own term.
        out[i] = (params.mu()[i] * a + g[i] + ctx.w2[i] * u[i]) / (a + ctx.w2[i]);
    }
    out
}

/// Individually optimal slab means, all units simultaneously.
pub fn s_star(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
) -> Array1<f64> {
    s_star_ctx(params, &InferCtx::new(params), v, h_hat, s_hat)
}

/// Bounds sign-flipping updates: when `s_star` reverses sign against `s_prev`
/// and overshoots ρ·|s_prev|, its magnitude is clipped to ρ·|s_prev|.
///
/// sign(0) is taken as +1.
pub fn clip_reflections(s_star: &Array1<f64>, s_prev: &Array1<f64>, rho: f64) -> Array1<f64> {
    let sign = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
    Array1::from_iter(s_star.iter().zip(s_prev.iter()).map(|(&new, &prev)| {
        if sign(new) != sign(prev) && new.abs() > rho * prev.abs() {
            rho * sign(new) * prev.abs()
        } else {
            new
        }
    }))
}

/// Convex combination η·new + (1−η)·old.
pub fn damp(new: &Array1<f64>, old: &Array1<f64>, eta: f64) -> Array1<f64> {
    Array1::from_iter(
        new.iter()
            .zip(old.iter())
            .map(|(&n, &o)| eta * n + (1.0 - eta) * o),
    )
}

fn h_star_ctx(
    params: &ModelParams,
    ctx: &InferCtx,
    v: ArrayView1<f64>,
    h_prev: &Array1<f64>,
    s_new: &Array1<f64>,
) -> Array1<f64> {
    let u = gated(h_prev, s_new);
    let g = residual_projection(params, v, &u);
    let n = params.n();
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let si = s_new[i];
        let a = params.alpha()[i];
        let ds = si - params.mu()[i];
        let z = si * (g[i] + ctx.w2[i] * u[i] - 0.5 * ctx.w2[i] * si) + params.b()[i]
            - 0.5 * a * ds * ds
            + ctx.half_ln_ratio[i];
        out[i] = sigmoid(z).clamp(H_HAT_MIN, H_HAT_MAX);
    }
    out
}

/// Individually optimal spike means given the freshly updated slabs and the
/// previous iteration's spikes, exactly in that order.
pub fn h_star(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_prev: &Array1<f64>,
    s_new: &Array1<f64>,
) -> Array1<f64> {
    h_star_ctx(params, &InferCtx::new(params), v, h_prev, s_new)
}

fn elbo_ctx(
    params: &ModelParams,
    ctx: &InferCtx,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
) -> f64 {
    let n = params.n();
    let u = gated(h_hat, s_hat);
    let recon = params.w().dot(&u);
    let mut quad = 0.0;
    for d in 0..params.d() {
        let r = v[d] - recon[d];
        quad += params.beta()[d] * r * r;
    }
    let mut out = ctx.log_norm - 0.5 * quad;
    for i in 0..n {
        let h = h_hat[i];
        let s = s_hat[i];
        let a = params.alpha()[i];
        // Residual second moment of the gated unit beyond its mean.
        let cov = h * (s * s + ctx.var_on[i]) - (h * s) * (h * s);
        out -= 0.5 * ctx.w2[i] * cov;
        // E_Q[(s_i − h_i μ_i)²]
        let ds = s - params.mu()[i];
        let second = h * (ds * ds + ctx.var_on[i]) + (1.0 - h) / a;
        out -= 0.5 * a * second;
        // Spike prior and entropy.
        out += h * params.b()[i];
        out += binary_entropy(h);
        out += 0.5 * (LN_2PI + 1.0) + h * 0.5 * ctx.var_on[i].ln() + (1.0 - h) * 0.5 * (1.0 / a).ln();
    }
    out
}

/// Energy functional (ELBO) of one example under the factorial family:
/// E_Q[log p(v, s, h)] + H(Q). Never exceeds log p(v).
pub fn elbo(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
) -> f64 {
    elbo_ctx(params, &InferCtx::new(params), v, h_hat, s_hat)
}

/// Batch-mean ELBO of a fitted state, reduced in row order.
pub fn batch_elbo_mean(params: &ModelParams, batch: &VisibleBatch, q: &VariationalState) -> f64 {
    let m = batch.len();
    if m == 0 {
        return f64::NAN;
    }
    let ctx = InferCtx::new(params);
    let v_mat = batch.matrix();
    let per_row: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            elbo_ctx(
                params,
                &ctx,
                v_mat.row(i),
                &q.h_hat.row(i).to_owned(),
                &q.s_hat.row(i).to_owned(),
            )
        })
        .collect();
    per_row.iter().sum::<f64>() / m as f64
}

/// Product of the slab-quadratic Hessian with `x`, computed from two
/// dictionary products without materializing the N×N matrix.
///
/// The quadratic is the ŝ-dependent part of the negated ELBO at fixed ĥ;
/// its Hessian is H = diag(ĥ) WᵀβW diag(ĥ) + diag(ĥ(1−ĥ) WᵢᵀβWᵢ + ĥα).
pub fn slab_hessian_vec(params: &ModelParams, h_hat: &Array1<f64>, x: &Array1<f64>) -> Array1<f64> {
    let ctx = InferCtx::new(params);
    slab_hessian_vec_ctx(params, &ctx, h_hat, x)
}

fn slab_hessian_vec_ctx(
    params: &ModelParams,
    ctx: &InferCtx,
    h_hat: &Array1<f64>,
    x: &Array1<f64>,
) -> Array1<f64> {
    let hx = gated(h_hat, x);
    let wx = params.w().dot(&hx);
    let bw = Array1::from_iter(wx.iter().zip(params.beta().iter()).map(|(&w, &b)| b * w));
    let back = params.w().t().dot(&bw);
    let n = params.n();
    let mut out = Array1::zeros(n);
    for i in 0..n {
        let h = h_hat[i];
        out[i] = h * back[i] + (ctx.w2[i] * h * (1.0 - h) + params.alpha()[i] * h) * x[i];
    }
    out
}

fn slab_linear_term(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
) -> Array1<f64> {
    let bv = Array1::from_iter(v.iter().zip(params.beta().iter()).map(|(&vd, &bd)| bd * vd));
    let wv = params.w().t().dot(&bv);
    let n = params.n();
    let mut c = Array1::zeros(n);
    for i in 0..n {
        c[i] = h_hat[i] * (wv[i] + params.alpha()[i] * params.mu()[i]);
    }
    c
}

fn cg_s_update_ctx(
    params: &ModelParams,
    ctx: &InferCtx,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
    max_steps: usize,
) -> Array1<f64> {
    let c = slab_linear_term(params, v, h_hat);
    let mut x = s_hat.clone();
    let hx = slab_hessian_vec_ctx(params, ctx, h_hat, &x);
    let mut r = &c - &hx;
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_steps {
        if rr <= 1e-28 {
            break;
        }
        let hp = slab_hessian_vec_ctx(params, ctx, h_hat, &p);
        let php = p.dot(&hp);
        if php <= 0.0 || !php.is_finite() {
            // Null or indefinite-by-rounding direction: stepping could not
            // decrease the quadratic, so stop.
            break;
        }
        let step = rr / php;
        x.scaled_add(step, &p);
        r.scaled_add(-step, &hp);
        let rr_new = r.dot(&r);
        let ratio = rr_new / rr;
        p = &r + &(p * ratio);
        rr = rr_new;
    }
    x
}

/// Partial conjugate-gradient minimization of the slab quadratic starting from
/// the current ŝ. Every step is non-increasing in the quadratic, hence
/// non-decreasing in the ELBO.
pub fn cg_s_update(
    params: &ModelParams,
    v: ArrayView1<f64>,
    h_hat: &Array1<f64>,
    s_hat: &Array1<f64>,
    max_steps: usize,
) -> Result<Array1<f64>, InferError> {
    let ctx = InferCtx::new(params);
    let x = cg_s_update_ctx(params, &ctx, v, h_hat, s_hat, max_steps);
    if let Some(unit) = x.iter().position(|t| !t.is_finite()) {
        return Err(InferError::NumericalDivergence { iteration: 0, unit });
    }
    Ok(x)
}

struct RowState {
    h: Array1<f64>,
    s: Array1<f64>,
    elbo: f64,
    active: bool,
}

fn update_row(
    params: &ModelParams,
    ctx: &InferCtx,
    cfg: &InferenceConfig,
    v: ArrayView1<f64>,
    row: &mut RowState,
    need_elbo: bool,
) -> Result<(), usize> {
    let s_new = match cfg.s_mode {
        SlabMode::Heuristic => {
            let star = s_star_ctx(params, ctx, v, &row.h, &row.s);
            let clipped = clip_reflections(&star, &row.s, cfg.rho);
            damp(&clipped, &row.s, cfg.eta_s)
        }
        SlabMode::ConjugateGradient => {
            cg_s_update_ctx(params, ctx, v, &row.h, &row.s, cfg.cg_max_steps)
        }
    };
    let star = h_star_ctx(params, ctx, v, &row.h, &s_new);
    let h_new = damp(&star, &row.h, cfg.eta_h);
    if let Some(unit) = s_new.iter().position(|x| !x.is_finite()) {
        return Err(unit);
    }
    if let Some(unit) = h_new.iter().position(|x| !x.is_finite()) {
        return Err(unit);
    }
    row.s = s_new;
    row.h = h_new;
    if need_elbo {
        let e = elbo_ctx(params, ctx, v, &row.h, &row.s);
        if !e.is_finite() {
            return Err(0);
        }
        let gain = e - row.elbo;
        row.elbo = e;
        if gain < cfg.elbo_tol {
            row.active = false;
        }
    }
    Ok(())
}

/// Runs the fixed-point E-step on every example of the batch in parallel.
///
/// Rows are fully independent: an example's result does not depend on what
/// else is in the batch. Each example stops early once its own ELBO gain
/// falls below `elbo_tol`; the loop ends when all examples have stopped or
/// the iteration budget is exhausted.
pub fn e_step(
    params: &ModelParams,
    batch: &VisibleBatch,
    cfg: &InferenceConfig,
) -> Result<(VariationalState, InferenceTrace), InferError> {
    cfg.validate()?;
    if batch.dim() != params.d() {
        return Err(InferError::DimMismatch {
            expected: params.d(),
            got: batch.dim(),
        });
    }
    let m = batch.len();
    let ctx = InferCtx::new(params);
    let need_elbo = cfg.record_trace || cfg.elbo_tol > f64::NEG_INFINITY;

    let init = init_q(params, 1);
    let mut rows: Vec<RowState> = (0..m)
        .map(|_| RowState {
            h: init.h_hat.row(0).to_owned(),
            s: init.s_hat.row(0).to_owned(),
            elbo: f64::NAN,
            active: true,
        })
        .collect();
    let v_mat = batch.matrix();

    if need_elbo {
        rows.par_iter_mut().enumerate().for_each(|(i, row)| {
            row.elbo = elbo_ctx(params, &ctx, v_mat.row(i), &row.h, &row.s);
        });
    }

    let mut trace = InferenceTrace::default();
    let record = |rows: &[RowState], trace: &mut InferenceTrace| {
        if rows.is_empty() {
            return;
        }
        let mean = rows.iter().map(|r| r.elbo).sum::<f64>() / rows.len() as f64;
        let total = rows.len() * params.n();
        let below = rows
            .iter()
            .map(|r| r.h.iter().filter(|&&x| x < 0.01).count())
            .sum::<usize>();
        let max_abs = rows
            .iter()
            .map(|r| r.s.iter().fold(0.0f64, |acc, &x| acc.max(x.abs())))
            .fold(0.0f64, f64::max);
        trace.elbo.push(mean);
        trace.sparsity.push(below as f64 / total as f64);
        trace.max_abs_s.push(max_abs);
    };
    if cfg.record_trace {
        record(&rows, &mut trace);
    }

    for k in 1..=cfg.max_iters {
        let results: Vec<Result<(), usize>> = rows
            .par_iter_mut()
            .enumerate()
            .map(|(i, row)| {
                if row.active {
                    update_row(params, &ctx, cfg, v_mat.row(i), row, need_elbo)
                } else {
                    Ok(())
                }
            })
            .collect();
        for res in results {
            if let Err(unit) = res {
                return Err(InferError::NumericalDivergence { iteration: k, unit });
            }
        }
        if cfg.record_trace {
            record(&rows, &mut trace);
        }
        if need_elbo && rows.iter().all(|r| !r.active) {
            break;
        }
    }
    for w in trace.elbo.windows(2) {
        if w[1] < w[0] - 1e-12 {
            trace.ascent_violations += 1;
        }
    }

    let n = params.n();
    let mut h_hat = Array2::zeros((m, n));
    let mut s_hat = Array2::zeros((m, n));
    for (i, row) in rows.into_iter().enumerate() {
        h_hat.row_mut(i).assign(&row.h);
        s_hat.row_mut(i).assign(&row.s);
    }
    Ok((VariationalState { h_hat, s_hat }, trace))
}
