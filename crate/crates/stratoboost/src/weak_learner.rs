//! Candidate weak rules (binned shallow trees grown leaf-wise), rule
//! prediction, and the versioned ensemble.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::core::{clamp_score, LabeledExample};
use crate::error::{Error, Result};

/// Per-feature split candidates, computed once and frozen for the run.
#[derive(Clone, Debug)]
pub struct BinningConfig {
    pub bins_per_feature: usize,
    /// Strictly increasing cut points per feature.
    pub thresholds: Vec<Vec<f64>>,
}

/// Approximate quantile cuts from an in-memory sample. Each feature gets at
/// most `bins_per_feature - 1` strictly increasing thresholds; constant
/// features get none.
pub fn build_bins(sample: &[LabeledExample], bins_per_feature: usize) -> Result<BinningConfig> {
    if sample.is_empty() {
        return Error::invalid("build_bins on empty sample");
    }
    let dim = sample[0].features.len();
    let n = sample.len();
    let mut thresholds = Vec::with_capacity(dim);
    for f in 0..dim {
        let mut vals: Vec<f64> = sample.iter().map(|e| e.features[f] as f64).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // distinct values with multiplicities
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for &v in &vals {
            match distinct.last_mut() {
                Some((d, c)) if *d == v => *c += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let mut cuts = Vec::new();
        if distinct.len() <= bins_per_feature {
            // few distinct values: cut between every consecutive pair
            for pair in distinct.windows(2) {
                let t = 0.5 * (pair[0].0 + pair[1].0);
                if t > pair[0].0 {
                    cuts.push(t);
                }
            }
        } else {
            // greedy packing of distinct values into bins of at most
            // ceil(n / bins) examples; reduces to quantile cuts for
            // continuous features, and cuts at cluster boundaries when
            // heavy duplicates would swallow an in-block quantile index
            let cap = n.div_ceil(bins_per_feature);
            let mut acc = 0usize;
            for pair in distinct.windows(2) {
                acc += pair[0].1;
                if acc + pair[1].1 > cap {
                    let t = 0.5 * (pair[0].0 + pair[1].0);
                    // midpoint can collapse onto a value for adjacent floats
                    if t > pair[0].0 {
                        cuts.push(t);
                    }
                    acc = 0;
                    if cuts.len() == bins_per_feature - 1 {
                        break;
                    }
                }
            }
        }
        thresholds.push(cuts);
    }
    Ok(BinningConfig { bins_per_feature, thresholds })
}

/// One condition on the path to a leaf: x[feature] <= threshold holds (left)
/// or fails (right).
#[derive(Clone, Debug, PartialEq)]
pub struct ScopeCond {
    pub feature: usize,
    pub threshold: f64,
    pub left: bool,
}

/// Path of conditions identifying a leaf; empty means the tree root.
pub type Scope = Vec<ScopeCond>;

/// A scoped split: predicts polarity on the left side of the split,
/// -polarity on the right, and 0 outside its leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitRule {
    pub scope: Scope,
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl SplitRule {
    pub fn predict(&self, x: &[f32]) -> Result<i8> {
        for cond in &self.scope {
            if cond.feature >= x.len() {
                return Error::invalid("feature index out of range");
            }
            let le = (x[cond.feature] as f64) <= cond.threshold;
            if le != cond.left {
                return Ok(0);
            }
        }
        if self.feature >= x.len() {
            return Error::invalid("feature index out of range");
        }
        if (x[self.feature] as f64) <= self.threshold {
            Ok(self.polarity)
        } else {
            Ok(-self.polarity)
        }
    }
}

/// Cartesian product {open leaf} x {feature} x {threshold} x {polarity},
/// in that deterministic order.
pub fn candidate_rules(bins: &BinningConfig, open_leaves: &[Scope]) -> Vec<SplitRule> {
    let mut out = Vec::new();
    for scope in open_leaves {
        for (feature, cuts) in bins.thresholds.iter().enumerate() {
            for &threshold in cuts {
                for polarity in [1i8, -1] {
                    out.push(SplitRule { scope: scope.clone(), feature, threshold, polarity });
                }
            }
        }
    }
    out
}

/// Leaf-wise growth bookkeeping for the tree under construction. A fired
/// split closes one open leaf and opens its two children; the tree is done
/// when it reaches `max_leaves`.
#[derive(Clone, Debug)]
pub struct TreeBuilder {
    max_leaves: usize,
    open_leaves: Vec<Scope>,
    leaf_count: usize,
    advantages: Vec<f64>,
}

impl TreeBuilder {
    pub fn new(max_leaves: usize) -> Self {
        Self { max_leaves: max_leaves.max(2), open_leaves: vec![Vec::new()], leaf_count: 1, advantages: Vec::new() }
    }

    pub fn open_leaves(&self) -> &[Scope] {
        &self.open_leaves
    }

    /// Certified advantage targets of the fired splits, in firing order.
    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn is_full(&self) -> bool {
        self.leaf_count >= self.max_leaves
    }

    /// Record a fired split on one of the open leaves.
    pub fn record_split(&mut self, rule: &SplitRule, advantage: f64) -> Result<()> {
        let pos = self
            .open_leaves
            .iter()
            .position(|s| *s == rule.scope)
            .ok_or_else(|| Error::InvalidInput("fired rule does not match an open leaf".into()))?;
        let scope = self.open_leaves.remove(pos);
        let mut left = scope.clone();
        left.push(ScopeCond { feature: rule.feature, threshold: rule.threshold, left: true });
        let mut right = scope;
        right.push(ScopeCond { feature: rule.feature, threshold: rule.threshold, left: false });
        self.open_leaves.push(left);
        self.open_leaves.push(right);
        self.leaf_count += 1;
        self.advantages.push(advantage);
        Ok(())
    }
}

/// The strong rule: an ordered, append-only list of (rule, alpha) pairs.
/// `version` is the number of rules.
#[derive(Clone, Debug)]
pub struct Ensemble {
    dim: usize,
    rules: Vec<(SplitRule, f64)>,
    /// Config echo carried into the model file.
    pub bins: usize,
    pub max_leaves: usize,
}

impl Ensemble {
    pub fn new(dim: usize) -> Self {
        Self { dim, rules: Vec::new(), bins: 0, max_leaves: 0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn version(&self) -> u32 {
        self.rules.len() as u32
    }

    pub fn rules(&self) -> &[(SplitRule, f64)] {
        &self.rules
    }

    pub fn push(&mut self, rule: SplitRule, alpha: f64) {
        self.rules.push((rule, alpha));
    }

    fn raw_range_score(&self, from: usize, to: usize, x: &[f32]) -> Result<f64> {
        if x.len() != self.dim {
            return Error::invalid(format!("expected {} features, got {}", self.dim, x.len()));
        }
        let mut s = 0.0;
        for (rule, alpha) in &self.rules[from..to] {
            s += alpha * rule.predict(x)? as f64;
        }
        Ok(s)
    }

    /// Full ensemble score, clamped.
    pub fn score(&self, x: &[f32]) -> Result<f64> {
        Ok(clamp_score(self.raw_range_score(0, self.rules.len(), x)?))
    }

    /// Score of the first `version` rules, clamped.
    pub fn prefix_score(&self, version: u32, x: &[f32]) -> Result<f64> {
        if version > self.version() {
            return Error::invalid("version exceeds ensemble length");
        }
        Ok(clamp_score(self.raw_range_score(0, version as usize, x)?))
    }

    /// Contribution of the rules appended since `from_version` (unclamped).
    pub fn delta_score(&self, from_version: u32, x: &[f32]) -> Result<f64> {
        if from_version > self.version() {
            return Error::invalid("from_version exceeds ensemble length");
        }
        self.raw_range_score(from_version as usize, self.rules.len(), x)
    }

    pub fn save(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "bins {}", self.bins)?;
        writeln!(w, "max_leaves {}", self.max_leaves)?;
        writeln!(w, "rules {}", self.rules.len())?;
        for (i, (rule, alpha)) in self.rules.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {} {} {}",
                i,
                fmt_scope(&rule.scope),
                rule.feature,
                fmt_f64(rule.threshold),
                rule.polarity,
                fmt_f64(*alpha)
            )?;
        }
        Ok(())
    }

    pub fn load(r: impl Read) -> Result<Ensemble> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let mut header = |key: &str| -> Result<usize> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 0, msg: "truncated model header".into() })?;
            let line = line?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::Parse { line: i + 1, msg: format!("expected `{key}` header") });
            }
            it.next()
                .and_then(|v| v.parse().ok())
                .ok_or(Error::Parse { line: i + 1, msg: format!("bad `{key}` value") })
        };
        let dim = header("dim")?;
        let bins = header("bins")?;
        let max_leaves = header("max_leaves")?;
        let nrules = header("rules")?;
        let mut ensemble = Ensemble::new(dim);
        ensemble.bins = bins;
        ensemble.max_leaves = max_leaves;
        for _ in 0..nrules {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::Parse { line: 0, msg: "truncated rule list".into() })?;
            let line = line?;
            let lineno = i + 1;
            let parse = |msg: &str| Error::Parse { line: lineno, msg: msg.into() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(parse("expected 6 fields"));
            }
            let scope = parse_scope(parts[1]).map_err(|m| parse(&m))?;
            let feature = parts[2].parse().map_err(|_| parse("bad feature index"))?;
            let threshold = parts[3].parse().map_err(|_| parse("bad threshold"))?;
            let polarity: i8 = parts[4].parse().map_err(|_| parse("bad polarity"))?;
            let alpha = parts[5].parse().map_err(|_| parse("bad alpha"))?;
            ensemble.push(SplitRule { scope, feature, threshold, polarity }, alpha);
        }
        Ok(ensemble)
    }
}

/// 17 significant digits: round-trips every f64 bit-exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_scope(scope: &Scope) -> String {
    if scope.is_empty() {
        return "-".into();
    }
    let mut s = String::new();
    for (i, c) in scope.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let side = if c.left { 'L' } else { 'R' };
        let _ = write!(s, "{}:{}:{}", c.feature, side, fmt_f64(c.threshold));
    }
    s
}

fn parse_scope(s: &str) -> std::result::Result<Scope, String> {
    if s == "-" {
        return Ok(Vec::new());
    }
    let mut scope = Vec::new();
    for tok in s.split(',') {
        let mut it = tok.splitn(3, ':');
        let feature = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("bad scope token `{tok}`"))?;
        let left = match it.next() {
            Some("L") => true,
            Some("R") => false,
            _ => return Err(format!("bad scope side in `{tok}`")),
        };
        let threshold = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("bad scope threshold in `{tok}`"))?;
        scope.push(ScopeCond { feature, threshold, left });
    }
    Ok(scope)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(features: Vec<f32>, label: i8) -> LabeledExample {
        LabeledExample::new(features, label).unwrap()
    }

    #[test]
    fn bins_constant_feature() {
        let sample: Vec<_> = (0..50).map(|_| ex(vec![7.0], 1)).collect();
        let bins = build_bins(&sample, 8).unwrap();
        assert!(bins.thresholds[0].is_empty());
    }

    #[test]
    fn bins_quantiles_match_sort_oracle() {
        let sample: Vec<_> = (1..=100).map(|i| ex(vec![i as f32], 1)).collect();
        let bins = build_bins(&sample, 4).unwrap();
        let cuts = &bins.thresholds[0];
        assert_eq!(cuts.len(), 3);
        // exact-sort quantile oracle: cuts near 25, 50, 75
        for (cut, q) in cuts.iter().zip([25.0, 50.0, 75.0]) {
            assert!((cut - q).abs() <= 1.0, "cut {cut} vs quantile {q}");
        }
        // strictly increasing
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bins_degenerate_one_bin() {
        let sample: Vec<_> = (0..10).map(|i| ex(vec![i as f32], 1)).collect();
        let bins = build_bins(&sample, 1).unwrap();
        assert!(bins.thresholds[0].is_empty());
        assert!(build_bins(&[], 4).is_err());
    }

    #[test]
    fn candidate_counting() {
        let bins = BinningConfig {
            bins_per_feature: 4,
            thresholds: vec![vec![1.0, 2.0, 3.0], vec![0.5, 1.5, 2.5]],
        };
        let root: Vec<Scope> = vec![Vec::new()];
        assert_eq!(candidate_rules(&bins, &root).len(), 12);

        let none = BinningConfig { bins_per_feature: 4, thresholds: vec![vec![], vec![]] };
        assert!(candidate_rules(&none, &root).is_empty());

        let one = BinningConfig { bins_per_feature: 2, thresholds: vec![vec![1.0]] };
        let leaves: Vec<Scope> = vec![Vec::new(); 3];
        assert_eq!(candidate_rules(&one, &leaves).len(), 6);
    }

    #[test]
    fn candidates_are_unique() {
        let bins = BinningConfig {
            bins_per_feature: 4,
            thresholds: vec![vec![1.0, 2.0], vec![0.5]],
        };
        let leaves: Vec<Scope> =
            vec![Vec::new(), vec![ScopeCond { feature: 0, threshold: 1.0, left: true }]];
        let rules = candidate_rules(&bins, &leaves);
        for i in 0..rules.len() {
            for j in i + 1..rules.len() {
                assert_ne!(rules[i], rules[j]);
            }
        }
    }

    #[test]
    fn predict_root_and_scoped() {
        let rule = SplitRule { scope: vec![], feature: 0, threshold: 5.0, polarity: 1 };
        assert_eq!(rule.predict(&[3.0]).unwrap(), 1);
        assert_eq!(rule.predict(&[7.0]).unwrap(), -1);

        let scoped = SplitRule {
            scope: vec![ScopeCond { feature: 1, threshold: 0.0, left: true }],
            feature: 0,
            threshold: 5.0,
            polarity: 1,
        };
        assert_eq!(scoped.predict(&[3.0, 10.0]).unwrap(), 0);
        assert_eq!(scoped.predict(&[3.0, -1.0]).unwrap(), 1);
        assert!(scoped.predict(&[3.0]).is_err());
    }

    #[test]
    fn score_and_delta() {
        let mut e = Ensemble::new(1);
        assert_eq!(e.score(&[0.0]).unwrap(), 0.0);
        e.push(SplitRule { scope: vec![], feature: 0, threshold: 5.0, polarity: 1 }, 0.5);
        e.push(SplitRule { scope: vec![], feature: 0, threshold: 1.0, polarity: 1 }, 1.0);
        // x=3: first rule +1, second rule -1 => 0.5 - 1.0
        assert!((e.score(&[3.0]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(e.delta_score(e.version(), &[3.0]).unwrap(), 0.0);
        assert!(e.delta_score(3, &[3.0]).is_err());
        // incremental consistency at every split point
        for v in 0..=e.version() {
            let total = e.prefix_score(v, &[3.0]).unwrap() + e.delta_score(v, &[3.0]).unwrap();
            assert!((total - e.score(&[3.0]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn score_is_clamped() {
        let mut e = Ensemble::new(1);
        for _ in 0..100 {
            e.push(SplitRule { scope: vec![], feature: 0, threshold: 5.0, polarity: 1 }, 1.0);
        }
        assert_eq!(e.score(&[0.0]).unwrap(), 30.0);
        assert_eq!(e.score(&[9.0]).unwrap(), -30.0);
    }

    #[test]
    fn tree_builder_leafwise_growth() {
        let mut t = TreeBuilder::new(4);
        assert_eq!(t.open_leaves().len(), 1);
        assert!(!t.is_full());
        let r1 = SplitRule { scope: vec![], feature: 0, threshold: 1.0, polarity: 1 };
        t.record_split(&r1, 0.2).unwrap();
        assert_eq!(t.open_leaves().len(), 2);
        let r2 = SplitRule {
            scope: t.open_leaves()[0].clone(),
            feature: 1,
            threshold: 3.0,
            polarity: -1,
        };
        t.record_split(&r2, 0.12).unwrap();
        assert_eq!(t.open_leaves().len(), 3);
        t.record_split(
            &SplitRule { scope: t.open_leaves()[0].clone(), feature: 0, threshold: 0.5, polarity: 1 },
            0.3,
        )
        .unwrap();
        assert!(t.is_full());
        assert_eq!(t.advantages(), &[0.2, 0.12, 0.3]);
    }

    #[test]
    fn tree_builder_stumps_at_two_leaves() {
        let mut t = TreeBuilder::new(2);
        let r = SplitRule { scope: vec![], feature: 0, threshold: 1.0, polarity: 1 };
        t.record_split(&r, 0.2).unwrap();
        assert!(t.is_full());
        // a rule from a different leaf must be rejected
        let mut t2 = TreeBuilder::new(4);
        let foreign = SplitRule {
            scope: vec![ScopeCond { feature: 3, threshold: 0.0, left: true }],
            feature: 0,
            threshold: 1.0,
            polarity: 1,
        };
        assert!(t2.record_split(&foreign, 0.1).is_err());
    }

    #[test]
    fn model_roundtrip_is_bit_exact() {
        let mut e = Ensemble::new(3);
        e.bins = 64;
        e.max_leaves = 4;
        e.push(
            SplitRule { scope: vec![], feature: 2, threshold: 0.1 + 0.2, polarity: -1 },
            std::f64::consts::PI,
        );
        e.push(
            SplitRule {
                scope: vec![ScopeCond { feature: 2, threshold: 0.1 + 0.2, left: false }],
                feature: 0,
                threshold: 1.0 / 3.0,
                polarity: 1,
            },
            1e-17,
        );
        let mut buf = Vec::new();
        e.save(&mut buf).unwrap();
        let back = Ensemble::load(&buf[..]).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.bins, 64);
        assert_eq!(back.max_leaves, 4);
        assert_eq!(back.rules().len(), 2);
        for ((r1, a1), (r2, a2)) in e.rules().iter().zip(back.rules()) {
            assert_eq!(r1, r2);
            assert_eq!(a1.to_bits(), a2.to_bits());
            assert_eq!(r1.threshold.to_bits(), r2.threshold.to_bits());
        }
    }
}
