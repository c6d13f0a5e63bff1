//! Training coordinator: runs early-stopped scans over the in-memory
//! sample, appends certified rules, watches the effective sample size, and
//! swaps in fresh unit-weight samples from the sampler agent.

use std::path::Path;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{init_gamma, BoostConfig};
use crate::core::{effective_sample_size, rule_weight, StampedExample};
use crate::error::{Error, Result};
use crate::io::StoreReader;
use crate::record;
use crate::sampler::{MvSampler, SampleSet, StratifiedStore};
use crate::scanner::{scan, shrink_gamma, update_weight, ScanOutcome, GAMMA_FLOOR};
use crate::weak_learner::{build_bins, candidate_rules, Ensemble, TreeBuilder};

/// One line of the training log, emitted per fired rule.
#[derive(Clone, Copy, Debug)]
pub struct RuleRecord {
    pub index: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub edge: f64,
    pub scanned: usize,
    pub ess_ratio: f64,
    pub epoch: usize,
    pub elapsed_secs: f64,
}

pub struct TrainOutput {
    pub ensemble: Ensemble,
    pub records: Vec<RuleRecord>,
    /// Final in-memory sample, weights refreshed to the final version.
    pub sample: Vec<StampedExample>,
    /// The stratified store, returned from the sampler agent at shutdown.
    pub store: StratifiedStore,
    pub epochs: usize,
    /// Resident bytes of the sample buffer (n x record size).
    pub sample_bytes: usize,
}

/// n_eff over the given weights, relative to the nominal sample size.
pub fn ess_ratio(weights: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Error::invalid("sample size must be positive");
    }
    Ok(effective_sample_size(weights)? / n as f64)
}

/// Train an ensemble from a shuffled binary record store.
///
/// The store is loaded into a disk-resident stratified structure under
/// `work_dir`; the sampler agent owns it on a worker thread and answers
/// resample requests; the scan loop runs on the calling thread.
pub fn train(
    store_path: &Path,
    cfg: &BoostConfig,
    work_dir: &Path,
    mut observer: Option<&mut dyn FnMut(&RuleRecord)>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let reader = StoreReader::open(store_path)?;
    let dim = reader.dim();
    let n = cfg.capped_sample_size(dim);

    // one pass: populate the strata and draw the initial sample with the
    // flat minimal-variance sampler
    let mut store = StratifiedStore::create(work_dir.join("strata"), dim, cfg.segment_bytes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut total = 0usize;
    let mut buffered: Vec<StampedExample> = Vec::new();
    for rec in reader {
        buffered.push(rec?);
        total += 1;
        if buffered.len() >= 1 << 16 {
            for ex in buffered.drain(..) {
                store.insert(ex)?;
            }
        }
    }
    for ex in buffered.drain(..) {
        store.insert(ex)?;
    }
    if total == 0 {
        return Error::invalid("dataset is empty");
    }
    let n = n.min(total);
    let theta = total as f64 / n as f64;
    let offset = rng.gen::<f64>() * theta;
    let mut mv = MvSampler::new(theta, offset)?;
    let mut sample: Vec<StampedExample> = Vec::with_capacity(n);
    {
        let reader = StoreReader::open(store_path)?;
        for rec in reader {
            let rec = rec?;
            if mv.offer(rec.last_weight) && sample.len() < n {
                sample.push(rec);
            }
        }
    }
    let empty = Ensemble::new(dim);
    if sample.len() < n {
        let top_up = store.assemble_sample(&empty, n - sample.len(), &mut rng)?;
        sample.extend(top_up.examples);
    }
    let sample_bytes = n * record::record_size(dim);

    let examples: Vec<_> = sample.iter().map(|s| s.example.clone()).collect();
    let bins = build_bins(&examples, cfg.bins)?;
    drop(examples);

    // sampler agent: owns the store, answers (snapshot, n) requests
    let (req_tx, req_rx) = mpsc::channel::<(Ensemble, usize)>();
    let (resp_tx, resp_rx) = mpsc::channel::<Result<SampleSet>>();
    let sampler_seed = cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let sampler = thread::spawn(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(sampler_seed);
        for (snapshot, n) in req_rx {
            if resp_tx.send(store.assemble_sample(&snapshot, n, &mut rng)).is_err() {
                break;
            }
        }
        store
    });

    let mut ensemble = Ensemble::new(dim);
    ensemble.bins = cfg.bins;
    ensemble.max_leaves = cfg.max_leaves;
    let mut tree = TreeBuilder::new(cfg.max_leaves);
    let mut gamma = init_gamma(None, cfg);
    let mut records: Vec<RuleRecord> = Vec::new();
    let mut epoch = 0usize;
    let mut fired = 0usize;

    while fired < cfg.max_rules {
        if let Some(budget) = cfg.wall_clock_secs {
            if started.elapsed().as_secs_f64() > budget {
                log::debug!("wall clock budget exhausted");
                break;
            }
        }
        let candidates = candidate_rules(&bins, tree.open_leaves());
        if candidates.is_empty() {
            break;
        }
        let stop_cfg = cfg.stopping.build(candidates.len());
        match scan(&mut sample, &ensemble, &candidates, gamma, &stop_cfg)? {
            ScanOutcome::Fired { rule, gamma_used, empirical_edge, examples_scanned } => {
                let alpha = rule_weight(gamma_used)?;
                ensemble.push(rule.clone(), alpha);
                tree.record_split(&rule, gamma_used)?;
                fired += 1;

                for ex in sample.iter_mut() {
                    *ex = update_weight(ex, &ensemble)?;
                }
                let weights: Vec<f64> = sample.iter().map(|e| e.last_weight).collect();
                let ratio = ess_ratio(&weights, sample.len())?;
                let rec = RuleRecord {
                    index: fired,
                    gamma: gamma_used,
                    alpha,
                    edge: empirical_edge,
                    scanned: examples_scanned,
                    ess_ratio: ratio,
                    epoch,
                    elapsed_secs: started.elapsed().as_secs_f64(),
                };
                if let Some(obs) = observer.as_deref_mut() {
                    obs(&rec);
                }
                records.push(rec);

                if tree.is_full() {
                    gamma = init_gamma(Some(tree.advantages()), cfg);
                    tree = TreeBuilder::new(cfg.max_leaves);
                }
                if ratio < cfg.ess_threshold {
                    req_tx
                        .send((ensemble.clone(), n))
                        .map_err(|_| Error::InvalidInput("sampler agent terminated".into()))?;
                    let set = resp_rx
                        .recv()
                        .map_err(|_| Error::InvalidInput("sampler agent terminated".into()))??;
                    sample = set.examples;
                    epoch += 1;
                }
            }
            ScanOutcome::Exhausted { max_empirical_edge, .. } => {
                // force strict progress on repeated failed passes; converge
                // once gamma would drop below the floor
                let next = shrink_gamma(max_empirical_edge).min(gamma * 0.95);
                if 0.9 * max_empirical_edge.max(0.0) < GAMMA_FLOOR || next < GAMMA_FLOOR {
                    log::debug!("converged: gamma would fall below floor");
                    break;
                }
                gamma = next;
            }
        }
    }

    drop(req_tx);
    let store = sampler.join().map_err(|_| Error::InvalidInput("sampler agent panicked".into()))?;
    Ok(TrainOutput { ensemble, records, sample, store, epochs: epoch, sample_bytes })
}
