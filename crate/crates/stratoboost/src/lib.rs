//! Boosted decision rules trained from disk-resident data.
//!
//! The trainer keeps a small weighted sample in memory, certifies each
//! weak rule with a sequential stopping rule instead of a full pass, and
//! refreshes the sample from a stratified on-disk store whenever the
//! effective sample size decays. Numeric kernels are generic over the
//! float type; the training pipeline is instantiated at `f64` (see
//! [`Scalar`]), with features stored as `f32` on the wire.

pub mod booster;
pub mod config;
pub mod core;
pub mod error;
pub mod eval;
pub mod io;
pub mod record;
pub mod sampler;
pub mod scanner;
pub mod stopping;
pub mod weak_learner;

pub use error::{Error, Result};

/// Scalar type used by the concrete training pipeline.
pub type Scalar = f64;
