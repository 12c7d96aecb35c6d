//! # s3c
//!
//! Spike-and-slab sparse coding: a latent factor model whose binary spikes
//! gate real-valued slabs. This crate provides the full desk-scale toolkit:
//!
//! - **`model`** — parameters, energy / log-joint evaluation, ancestral
//!   sampling, and analytic prior moments.
//! - **`inference`** — the parallel damped fixed-point E-step fitting a
//!   factorial variational family, with an optional conjugate-gradient slab
//!   mode and per-iteration ELBO/sparsity traces.
//! - **`oracle`** — exact enumeration over spike configurations for small N,
//!   certifying the approximate inference against ground truth.
//! - **`learning`** — variational EM with frozen-Q gradient M-steps and
//!   unit-norm dictionary projection.
//! - **`pipeline`** — patch extraction, contrast normalization, ZCA
//!   whitening, batched encoding with E_Q[h], and grid average pooling.
//! - **`classify`** — one-vs-all linear SVM trained by stochastic subgradient
//!   descent, as a stand-in linear classifier over pooled features.
//! - **`io`** / **`config`** — bit-exact tensor, matrix, and model-archive
//!   persistence plus the TOML run configuration.
//!
//! The `s3c` binary exposes these as subcommands (`train`, `sample`, `infer`,
//! `extract-features`, `fit-whitening`, `classify`, `oracle`); the crate's
//! `examples/` directory has one runnable walkthrough per capability.

pub mod classify;
pub mod config;
pub mod inference;
pub mod io;
pub mod learning;
pub mod math;
pub mod model;
pub mod oracle;
pub mod pipeline;

pub use inference::{
    e_step, InferError, InferenceConfig, InferenceTrace, SlabMode, VariationalState,
};
pub use learning::{train_em, LearnError, TrainConfig, TrainInit};
pub use model::{ModelError, ModelParams, VisibleBatch};
pub use oracle::{exact_posterior, ExactPosterior, OracleError};
