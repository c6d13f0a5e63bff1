//! Domain types and the closed-form boosting math: example weights, edges,
//! effective sample size, and rule weights.
//!
//! The numeric kernels are generic over the scalar type; the concrete
//! pipeline instantiates them at [`crate::Scalar`] (f64).

use num_traits::Float;

use crate::error::{Error, Result};

/// Ensemble scores are clamped to this magnitude before exponentiation so
/// weights stay within ~[1e-13, 1e13] and the strata indexing stays bounded.
pub const SCORE_CLAMP: f64 = 30.0;

/// One training example: dense features plus a binary label in {-1, +1}.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f32>,
    pub label: i8,
}

impl LabeledExample {
    pub fn new(features: Vec<f32>, label: i8) -> Result<Self> {
        if label != -1 && label != 1 {
            return Error::invalid(format!("label must be -1 or +1, got {label}"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Error::invalid("non-finite feature value");
        }
        Ok(Self { features, label })
    }
}

/// An example together with its last computed weight and the ensemble
/// version (rule count) that weight corresponds to.
#[derive(Clone, Debug, PartialEq)]
pub struct StampedExample {
    pub example: LabeledExample,
    pub last_weight: f64,
    pub last_version: u32,
}

impl StampedExample {
    /// Fresh stamp: unit weight against the empty ensemble.
    pub fn fresh(example: LabeledExample) -> Self {
        Self { example, last_weight: 1.0, last_version: 0 }
    }
}

/// Running weighted-correlation accumulator; `edge()` is the
/// weight-normalized estimate of a rule's true edge.
#[derive(Clone, Copy, Debug)]
pub struct EdgeEstimate<F: Float> {
    pub weighted_correlation_sum: F,
    pub weight_sum: F,
}

impl<F: Float> EdgeEstimate<F> {
    pub fn zero() -> Self {
        Self { weighted_correlation_sum: F::zero(), weight_sum: F::zero() }
    }

    pub fn add(&mut self, weight: F, correlation: F) {
        self.weighted_correlation_sum = self.weighted_correlation_sum + weight * correlation;
        self.weight_sum = self.weight_sum + weight;
    }

    pub fn edge(&self) -> F {
        if self.weight_sum > F::zero() {
            self.weighted_correlation_sum / self.weight_sum
        } else {
            F::zero()
        }
    }
}

/// Compensated (Kahan) accumulator; keeps long weight sums stable.
#[derive(Clone, Copy, Debug)]
pub struct KahanSum<F: Float> {
    sum: F,
    comp: F,
}

impl<F: Float> KahanSum<F> {
    pub fn new() -> Self {
        Self { sum: F::zero(), comp: F::zero() }
    }

    pub fn add(&mut self, x: F) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> F {
        self.sum
    }
}

impl<F: Float> Default for KahanSum<F> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn clamp_score<F: Float>(score: F) -> F {
    let cap = F::from(SCORE_CLAMP).unwrap();
    score.max(-cap).min(cap)
}

/// Boosting weight of an example: exp(-score * label).
///
/// The caller is responsible for clamping the score (see [`clamp_score`]).
pub fn example_weight<F: Float>(score: F, label: i8) -> Result<F> {
    if !score.is_finite() {
        return Error::invalid("non-finite score");
    }
    if label != -1 && label != 1 {
        return Error::invalid(format!("label must be -1 or +1, got {label}"));
    }
    let y = F::from(label).unwrap();
    Ok((-score * y).exp())
}

/// Weight-normalized correlation between predictions and labels.
pub fn empirical_edge<F: Float>(predictions: &[F], labels: &[i8], weights: &[F]) -> Result<F> {
    if predictions.is_empty() {
        return Error::invalid("empirical_edge on empty input");
    }
    if predictions.len() != labels.len() || labels.len() != weights.len() {
        return Error::invalid("empirical_edge input length mismatch");
    }
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for ((&p, &y), &w) in predictions.iter().zip(labels).zip(weights) {
        if !(w > F::zero()) || !w.is_finite() {
            return Error::invalid("weights must be positive and finite");
        }
        num.add(w * p * F::from(y).unwrap());
        den.add(w);
    }
    Ok(num.value() / den.value())
}

/// Effective number of examples: (sum w)^2 / (sum w^2). Lies in [1, n].
pub fn effective_sample_size<F: Float>(weights: &[F]) -> Result<F> {
    if weights.is_empty() {
        return Error::invalid("effective_sample_size on empty input");
    }
    let mut s = KahanSum::new();
    let mut s2 = KahanSum::new();
    for &w in weights {
        if !(w > F::zero()) || !w.is_finite() {
            return Error::invalid("weights must be positive and finite");
        }
        s.add(w);
        s2.add(w * w);
    }
    Ok(s.value() * s.value() / s2.value())
}

/// Weight given to a rule certified at edge `gamma`: (1/2) ln((1/2+g)/(1/2-g)).
pub fn rule_weight<F: Float>(gamma: F) -> Result<F> {
    let half = F::from(0.5).unwrap();
    if !(gamma > F::zero() && gamma < half) {
        return Error::invalid("gamma must lie in (0, 0.5)");
    }
    Ok(half * ((half + gamma) / (half - gamma)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_weight_closed_form() {
        assert_eq!(example_weight(0.0f64, 1).unwrap(), 1.0);
        let ln2 = 2.0f64.ln();
        assert!((example_weight(ln2, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((example_weight(ln2, -1).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn example_weight_rejects_bad_input() {
        assert!(example_weight(f64::NAN, 1).is_err());
        assert!(example_weight(f64::INFINITY, -1).is_err());
        assert!(example_weight(0.0, 0).is_err());
    }

    #[test]
    fn example_weight_reciprocal() {
        for s in [0.0, 0.3, -2.5, 7.0] {
            let a = example_weight(s, 1).unwrap();
            let b = example_weight(-s, 1).unwrap();
            assert!((a * b - 1.0f64).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_edge_cases() {
        let perfect = empirical_edge(&[1.0, -1.0], &[1, -1], &[1.0, 1.0]).unwrap();
        assert_eq!(perfect, 1.0);
        let random = empirical_edge(&[1.0, 1.0], &[1, -1], &[1.0, 1.0]).unwrap();
        assert_eq!(random, 0.0);
        // (1*1 - 2*1 + 1*1) / (1+2+1)
        let mixed = empirical_edge(&[1.0, -1.0, 1.0], &[1, 1, 1], &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(mixed, 0.0);
        assert!(empirical_edge::<f64>(&[], &[], &[]).is_err());
    }

    #[test]
    fn empirical_edge_matches_brute_force() {
        let preds = [0.5, -1.0, 1.0, -0.25];
        let labels = [1i8, -1, -1, 1];
        let weights = [0.3, 1.7, 2.0, 0.5];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..4 {
            num += weights[i] * preds[i] * labels[i] as f64;
            den += weights[i];
        }
        let got = empirical_edge(&preds, &labels, &weights).unwrap();
        assert!((got - num / den).abs() < 1e-15);
    }

    #[test]
    fn ess_uniform_is_n() {
        let w = vec![1.0f64; 10];
        assert!((effective_sample_size(&w).unwrap() - 10.0).abs() < 1e-12);
        // scale invariance
        let w2: Vec<f64> = w.iter().map(|x| x * 42.0).collect();
        assert!((effective_sample_size(&w2).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ess_k_spike() {
        // k heavy weights dominate: n_eff -> k as the rest vanish.
        let k = 4;
        let mut w = vec![1.0 / k as f64; k];
        w.extend(std::iter::repeat(1e-12).take(16));
        let ess: f64 = effective_sample_size(&w).unwrap();
        assert!((ess - k as f64).abs() < 1e-6, "ess = {ess}");
    }

    #[test]
    fn ess_imbalanced_worked_example() {
        // 20 heavy weights a, 1980 light weights a/99: exact value
        // 1600 / (20 + 1980/99^2).
        let a = 3.7;
        let mut w = vec![a; 20];
        w.extend(std::iter::repeat(a / 99.0).take(1980));
        let exact = 1600.0 / (20.0 + 1980.0 / (99.0f64 * 99.0));
        let ess = effective_sample_size(&w).unwrap();
        assert!((ess - exact).abs() < 1e-9);
        assert!(ess > 79.0 && ess < 80.0);
    }

    #[test]
    fn ess_rejects_bad_weights() {
        assert!(effective_sample_size::<f64>(&[]).is_err());
        assert!(effective_sample_size(&[1.0, 0.0]).is_err());
        assert!(effective_sample_size(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn rule_weight_closed_form() {
        let w: f64 = rule_weight(0.25).unwrap();
        assert!((w - 0.5 * 3.0f64.ln()).abs() < 1e-15);
        let w: f64 = rule_weight(0.3).unwrap();
        assert!((w - 2.0f64.ln()).abs() < 1e-15);
        assert!(rule_weight(1e-12).unwrap() > 0.0);
        assert!(rule_weight(0.0).is_err());
        assert!(rule_weight(0.5).is_err());
        assert!(rule_weight(-0.1).is_err());
    }

    #[test]
    fn rule_weight_monotone() {
        let mut prev = 0.0;
        for i in 1..50 {
            let g = i as f64 * 0.01;
            let w = rule_weight(g).unwrap();
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn labeled_example_validation() {
        assert!(LabeledExample::new(vec![1.0], 2).is_err());
        assert!(LabeledExample::new(vec![f32::NAN], 1).is_err());
        assert!(LabeledExample::new(vec![1.0, -3.0], -1).is_ok());
    }

    #[test]
    fn generic_over_f32() {
        let w = vec![1.0f32; 8];
        assert!((effective_sample_size(&w).unwrap() - 8.0).abs() < 1e-5);
    }
}
