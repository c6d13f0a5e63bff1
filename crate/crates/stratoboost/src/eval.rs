//! Metrics: average exponential potential and AUROC.

use crate::core::{example_weight, LabeledExample};
use crate::error::{Error, Result};
use crate::weak_learner::Ensemble;

#[derive(Clone, Copy, Debug)]
pub struct MetricReport {
    pub exp_loss: f64,
    pub auroc: f64,
    pub n_examples: usize,
}

/// Mean of exp(-score * label) over the dataset (scores clamped).
pub fn exp_loss(ensemble: &Ensemble, examples: &[LabeledExample]) -> Result<f64> {
    if examples.is_empty() {
        return Error::invalid("exp_loss on empty dataset");
    }
    let mut sum = 0.0;
    for ex in examples {
        sum += example_weight(ensemble.score(&ex.features)?, ex.label)?;
    }
    Ok(sum / examples.len() as f64)
}

/// Mann-Whitney AUROC: probability that a random positive outranks a random
/// negative, with ties counted half. Single sort, O(n log n).
pub fn auroc(scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Error::invalid("auroc input length mismatch");
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auroc needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // average ranks over tie groups, then the rank-sum statistic
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0; // 1-based
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub fn report(ensemble: &Ensemble, examples: &[LabeledExample]) -> Result<MetricReport> {
    let scores: Vec<f64> =
        examples.iter().map(|e| ensemble.score(&e.features)).collect::<Result<_>>()?;
    let labels: Vec<i8> = examples.iter().map(|e| e.label).collect();
    Ok(MetricReport {
        exp_loss: exp_loss(ensemble, examples)?,
        auroc: auroc(&scores, &labels)?,
        n_examples: examples.len(),
    })
}
