//! Sequential scan over the in-memory sample: refresh weights
//! incrementally, maintain per-candidate stopping statistics, fire the
//! stopping rule, and report the best empirical edge on exhaustion.

use crate::core::{EdgeEstimate, KahanSum, StampedExample, SCORE_CLAMP};
use crate::error::{Error, Result};
use crate::stopping::{should_stop, ScanState, StoppingConfig};
use crate::weak_learner::{Ensemble, SplitRule};

/// The run converges once gamma would shrink below this floor; a rule
/// certified at the floor contributes essentially nothing.
pub const GAMMA_FLOOR: f64 = 0.001;

/// Outcome of one scanning search.
#[derive(Clone, Debug)]
pub enum ScanOutcome {
    Fired {
        rule: SplitRule,
        gamma_used: f64,
        empirical_edge: f64,
        examples_scanned: usize,
    },
    Exhausted {
        max_empirical_edge: f64,
        best_rule: SplitRule,
    },
}

/// Refresh a stamped weight by applying only the ensemble suffix added
/// since the stamp's version. Weights stay within the band implied by the
/// score clamp.
pub fn update_weight(ex: &StampedExample, snapshot: &Ensemble) -> Result<StampedExample> {
    if ex.last_version > snapshot.version() {
        return Error::invalid("example stamped with a version newer than the snapshot");
    }
    let delta = snapshot.delta_score(ex.last_version, &ex.example.features)?;
    let y = ex.example.label as f64;
    let w = (ex.last_weight * (-y * delta).exp()).clamp((-SCORE_CLAMP).exp(), SCORE_CLAMP.exp());
    Ok(StampedExample { example: ex.example.clone(), last_weight: w, last_version: snapshot.version() })
}

/// Shrink the advantage target after a failed pass: 0.9 times the best
/// empirical edge seen, never below the floor.
pub fn shrink_gamma(max_empirical_edge: f64) -> f64 {
    (0.9 * max_empirical_edge.max(GAMMA_FLOOR)).clamp(GAMMA_FLOOR, 0.499)
}

/// One search pass (Fired or Exhausted) over the sample. Weights are
/// refreshed in place as examples are consumed; per-candidate statistics
/// start from zero. The stopping rule is evaluated every
/// `cfg.check_interval` examples and once more at the end of the sample;
/// the first candidate (in order) that satisfies it wins.
pub fn scan(
    sample: &mut [StampedExample],
    snapshot: &Ensemble,
    candidates: &[SplitRule],
    gamma: f64,
    cfg: &StoppingConfig,
) -> Result<ScanOutcome> {
    if sample.is_empty() {
        return Error::invalid("scan on empty sample");
    }
    if !(gamma > 0.0 && gamma < 0.5) {
        return Error::invalid("gamma must lie in (0, 0.5)");
    }
    if candidates.is_empty() {
        return Error::invalid("scan with no candidates");
    }

    let mut states = vec![ScanState::<f64>::zero(); candidates.len()];
    let mut edges = vec![EdgeEstimate::<f64>::zero(); candidates.len()];
    let mut weight_sum = KahanSum::<f64>::new();
    let mut weight_sq_sum = KahanSum::<f64>::new();

    let total = sample.len();
    for (i, ex) in sample.iter_mut().enumerate() {
        *ex = update_weight(ex, snapshot)?;
        let w = ex.last_weight;
        let y = ex.example.label as f64;
        weight_sum.add(w);
        weight_sq_sum.add(w * w);

        for (c, rule) in candidates.iter().enumerate() {
            let h = rule.predict(&ex.example.features)?;
            let corr = h as f64 * y;
            states[c].update(w, corr, gamma)?;
            if h != 0 {
                edges[c].add(w, corr);
            }
        }

        let scanned = i + 1;
        let at_interval = scanned as u64 % cfg.check_interval == 0;
        if at_interval || scanned == total {
            for (c, state) in states.iter().enumerate() {
                if should_stop(state, cfg) {
                    return Ok(ScanOutcome::Fired {
                        rule: candidates[c].clone(),
                        gamma_used: gamma,
                        empirical_edge: edges[c].edge(),
                        examples_scanned: scanned,
                    });
                }
            }
            if at_interval && log::log_enabled!(log::Level::Debug) {
                let s = weight_sum.value();
                let neff = s * s / weight_sq_sum.value();
                let best = edges.iter().map(|e| e.edge()).fold(f64::NEG_INFINITY, f64::max);
                log::debug!("scanned={scanned} n_eff={neff:.3} best_edge={best:.6} gamma={gamma:.6}");
            }
        }
    }

    let (best_idx, best_edge) = edges
        .iter()
        .map(|e| e.edge())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(ScanOutcome::Exhausted {
        max_empirical_edge: best_edge,
        best_rule: candidates[best_idx].clone(),
    })
}

/// Full-pass baseline (no early stopping): scans every example and returns
/// the candidate with the largest empirical edge. Used by `bench-scan` as
/// the comparison mode.
pub fn full_scan_best(
    sample: &mut [StampedExample],
    snapshot: &Ensemble,
    candidates: &[SplitRule],
) -> Result<(SplitRule, f64, usize)> {
    if sample.is_empty() || candidates.is_empty() {
        return Error::invalid("full_scan_best on empty input");
    }
    let mut edges = vec![EdgeEstimate::<f64>::zero(); candidates.len()];
    for ex in sample.iter_mut() {
        *ex = update_weight(ex, snapshot)?;
        let y = ex.example.label as f64;
        for (c, rule) in candidates.iter().enumerate() {
            let h = rule.predict(&ex.example.features)?;
            if h != 0 {
                edges[c].add(ex.last_weight, h as f64 * y);
            }
        }
    }
    let (best_idx, best_edge) = edges
        .iter()
        .map(|e| e.edge())
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok((candidates[best_idx].clone(), best_edge, sample.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::LabeledExample;
    use crate::stopping;
    use crate::weak_learner::SplitRule;

    fn stamped(x: f32, label: i8) -> StampedExample {
        StampedExample::fresh(LabeledExample::new(vec![x], label).unwrap())
    }

    fn stump(threshold: f64, polarity: i8) -> SplitRule {
        SplitRule { scope: vec![], feature: 0, threshold, polarity }
    }

    #[test]
    fn update_weight_examples() {
        let mut e = Ensemble::new(1);
        let ex = stamped(0.0, 1);
        // same version: unchanged
        let same = update_weight(&ex, &e).unwrap();
        assert_eq!(same.last_weight, 1.0);

        e.push(stump(5.0, 1), 2.0f64.ln());
        let pos = update_weight(&ex, &e).unwrap();
        assert!((pos.last_weight - 0.5).abs() < 1e-15);
        assert_eq!(pos.last_version, 1);

        let neg = update_weight(&stamped(0.0, -1), &e).unwrap();
        assert!((neg.last_weight - 2.0).abs() < 1e-15);

        // stale stamp ahead of the snapshot is an error
        let ahead = StampedExample { last_version: 2, ..ex };
        assert!(update_weight(&ahead, &Ensemble::new(1)).is_err());
    }

    #[test]
    fn refreshed_weight_matches_from_scratch() {
        let mut e = Ensemble::new(1);
        let mut ex = stamped(3.0, 1);
        for i in 0..20 {
            e.push(stump(i as f64, if i % 2 == 0 { 1 } else { -1 }), 0.1 + 0.01 * i as f64);
            ex = update_weight(&ex, &e).unwrap();
        }
        let scratch =
            crate::core::example_weight(e.score(&ex.example.features).unwrap(), ex.example.label)
                .unwrap();
        assert!((ex.last_weight - scratch).abs() / scratch < 1e-9);
    }

    #[test]
    fn shrink_gamma_values() {
        assert!((shrink_gamma(0.3) - 0.27).abs() < 1e-15);
        assert_eq!(shrink_gamma(0.0), GAMMA_FLOOR);
        assert!((shrink_gamma(0.5) - 0.45).abs() < 1e-15);
        assert!(shrink_gamma(1.0) < 0.5);
    }

    #[test]
    fn scan_fires_at_first_check_after_burn_in() {
        // perfect candidate: corr == +1 on every example, unit weights
        let mut sample: Vec<StampedExample> =
            (0..400).map(|i| if i % 2 == 0 { stamped(0.0, 1) } else { stamped(10.0, -1) }).collect();
        let e = Ensemble::new(1);
        let cands = vec![stump(5.0, 1)];
        let cfg = StoppingConfig { c: 1.0, b: 1000f64.ln(), t0: 256, check_interval: 16 };
        // independent oracle: minimal t on the 16-grid past 256 where
        // 0.9 t > sqrt(t (loglog + ln 1000)); t = 272 suffices.
        match scan(&mut sample, &e, &cands, 0.1, &cfg).unwrap() {
            ScanOutcome::Fired { examples_scanned, gamma_used, empirical_edge, .. } => {
                assert_eq!(examples_scanned, 272);
                assert_eq!(gamma_used, 0.1);
                assert!((empirical_edge - 1.0).abs() < 1e-12);
            }
            other => panic!("expected fire, got {other:?}"),
        }
    }

    #[test]
    fn scan_exhausts_on_zero_edge() {
        // both polarities of a balanced split: edge 0 for every candidate
        let mut sample: Vec<StampedExample> = (0..300)
            .map(|i| stamped(if i % 2 == 0 { 0.0 } else { 10.0 }, if i % 4 < 2 { 1 } else { -1 }))
            .collect();
        let e = Ensemble::new(1);
        let cands = vec![stump(5.0, 1), stump(5.0, -1)];
        let cfg = stopping::default_config(cands.len());
        match scan(&mut sample, &e, &cands, 0.4, &cfg).unwrap() {
            ScanOutcome::Exhausted { max_empirical_edge, .. } => {
                assert!(max_empirical_edge.abs() < 0.05);
            }
            other => panic!("expected exhausted, got {other:?}"),
        }
    }

    #[test]
    fn scan_single_example_burn_in_never_met() {
        let mut sample = vec![stamped(0.0, 1)];
        let e = Ensemble::new(1);
        let cands = vec![stump(5.0, 1)];
        let cfg = stopping::default_config(1);
        assert!(matches!(
            scan(&mut sample, &e, &cands, 0.1, &cfg).unwrap(),
            ScanOutcome::Exhausted { .. }
        ));
    }

    #[test]
    fn scan_is_deterministic() {
        let make = || -> Vec<StampedExample> {
            (0..500)
                .map(|i| stamped((i % 7) as f32, if i % 3 == 0 { 1 } else { -1 }))
                .collect()
        };
        let e = Ensemble::new(1);
        let cands: Vec<SplitRule> = (1..7).map(|t| stump(t as f64 - 0.5, 1)).collect();
        let cfg = stopping::default_config(cands.len());
        let mut s1 = make();
        let mut s2 = make();
        let r1 = format!("{:?}", scan(&mut s1, &e, &cands, 0.05, &cfg).unwrap());
        let r2 = format!("{:?}", scan(&mut s2, &e, &cands, 0.05, &cfg).unwrap());
        assert_eq!(r1, r2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn full_scan_finds_best_candidate() {
        let mut sample: Vec<StampedExample> =
            (0..200).map(|i| if i % 2 == 0 { stamped(0.0, 1) } else { stamped(10.0, -1) }).collect();
        let e = Ensemble::new(1);
        let cands = vec![stump(-1.0, 1), stump(5.0, 1), stump(5.0, -1)];
        let (best, edge, scanned) = full_scan_best(&mut sample, &e, &cands).unwrap();
        assert_eq!(best, cands[1]);
        assert!((edge - 1.0).abs() < 1e-12);
        assert_eq!(scanned, 200);
    }
}
