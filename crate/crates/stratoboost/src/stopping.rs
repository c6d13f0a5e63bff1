//! Sequential stopping rule: per-candidate cumulative statistics and the
//! fire/no-fire test that certifies a rule's true edge exceeds the target.

use num_traits::Float;

use crate::error::{Error, Result};

/// Cumulative scan statistics for one candidate rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanState<F: Float = f64> {
    pub m: F,
    pub v: F,
    pub count: u64,
}

impl<F: Float> ScanState<F> {
    pub fn zero() -> Self {
        Self { m: F::zero(), v: F::zero(), count: 0 }
    }

    /// Absorb one example: m += w * (corr - gamma), v += w^2.
    pub fn update(&mut self, weight: F, correlation: F, gamma: F) -> Result<()> {
        if !(weight > F::zero()) || !weight.is_finite() {
            return Error::invalid("weight must be positive and finite");
        }
        if correlation.abs() > F::one() {
            return Error::invalid("correlation must lie in [-1, 1]");
        }
        self.m = self.m + weight * (correlation - gamma);
        self.v = self.v + weight * weight;
        self.count += 1;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StoppingConfig<F: Float = f64> {
    /// Universal constant in front of the threshold.
    pub c: F,
    /// Additive log term, ln(1/sigma).
    pub b: F,
    /// Burn-in: the rule never fires at count <= t0.
    pub t0: u64,
    /// Evaluate the test every this many examples.
    pub check_interval: u64,
}

/// Guarded log log: ln(max(1, ln(max(e, r)))). The bracket never drops
/// below zero, so the threshold is never lowered by the guard.
fn loglog_term<F: Float>(r: F) -> F {
    let e = F::exp(F::one());
    r.max(e).ln().max(F::one()).ln()
}

/// The sequential test: fires iff count > t0, m > 0, and
/// m > c * sqrt(v * (loglog(v/m) + b)).
pub fn should_stop<F: Float>(state: &ScanState<F>, cfg: &StoppingConfig<F>) -> bool {
    if state.count <= cfg.t0 || state.m <= F::zero() {
        return false;
    }
    let threshold = cfg.c * (state.v * (loglog_term(state.v / state.m) + cfg.b)).sqrt();
    state.m > threshold
}

/// Operating-point defaults: c = 1, sigma = 0.001 / num_candidates,
/// b = ln(1/sigma).
pub fn default_config(num_candidates: usize) -> StoppingConfig<f64> {
    let n = num_candidates.max(1);
    let sigma = 0.001 / n as f64;
    StoppingConfig { c: 1.0, b: (1.0 / sigma).ln(), t0: 256, check_interval: 16 }
}
