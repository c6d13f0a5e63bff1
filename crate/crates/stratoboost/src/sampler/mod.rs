//! Weighted sampling: a disk-resident stratified store keyed by
//! floor(log2 w) with in-stratum accept/reject (reject rate at most 1/2),
//! plus the flat minimal-variance systematic sampler used for the initial
//! pass over the raw shuffled dataset.

pub mod fifo;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::core::{KahanSum, StampedExample};
use crate::error::{Error, Result};
use crate::scanner::update_weight;
use crate::weak_learner::Ensemble;

use fifo::DiskFifo;

pub const DEFAULT_SEGMENT_BYTES: usize = 16 * 1024 * 1024;
const RECOUNT_INTERVAL: u64 = 1_000_000;

/// Band index k such that 2^k <= weight < 2^(k+1).
pub fn stratum_index(weight: f64) -> Result<i32> {
    if !(weight > 0.0) || !weight.is_finite() {
        return Error::invalid("stratum_index requires a positive finite weight");
    }
    let mut k = weight.log2().floor() as i32;
    // guard against log2 rounding at band edges
    if weight < (k as f64).exp2() {
        k -= 1;
    } else if weight >= ((k + 1) as f64).exp2() {
        k += 1;
    }
    Ok(k)
}

/// One weight band: a disk FIFO of records plus an estimated total weight.
pub struct Stratum {
    pub fifo: DiskFifo,
    pub weight_sum: f64,
}

/// Disk-resident strata with a weight table for stratum selection.
pub struct StratifiedStore {
    dir: PathBuf,
    dim: usize,
    segment_limit: usize,
    strata: BTreeMap<i32, Stratum>,
    total: usize,
    ops: u64,
    recount_interval: u64,
}

/// A freshly assembled in-memory sample: unit weights, stamped at the
/// ensemble version current at assembly.
pub struct SampleSet {
    pub examples: Vec<StampedExample>,
    pub version: u32,
}

impl StratifiedStore {
    pub fn create(dir: impl Into<PathBuf>, dim: usize, segment_limit: usize) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            dim,
            segment_limit,
            strata: BTreeMap::new(),
            total: 0,
            ops: 0,
            recount_interval: RECOUNT_INTERVAL,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    #[doc(hidden)]
    pub fn set_recount_interval(&mut self, interval: u64) {
        self.recount_interval = interval.max(1);
    }

    fn stratum_mut(&mut self, k: i32) -> Result<&mut Stratum> {
        if !self.strata.contains_key(&k) {
            let fifo = DiskFifo::create(self.dir.join(format!("stratum_{k}")), self.dim, self.segment_limit)
                .map_err(|e| wrap_storage(k, e))?;
            self.strata.insert(k, Stratum { fifo, weight_sum: 0.0 });
        }
        Ok(self.strata.get_mut(&k).unwrap())
    }

    /// File a record under the band of its stamped weight.
    pub fn insert(&mut self, ex: StampedExample) -> Result<()> {
        let k = stratum_index(ex.last_weight)?;
        let w = ex.last_weight;
        let s = self.stratum_mut(k)?;
        s.fifo.push(ex).map_err(|e| wrap_storage(k, e))?;
        s.weight_sum += w;
        self.total += 1;
        Ok(())
    }

    /// Total estimated weight over all strata.
    pub fn total_weight(&self) -> f64 {
        self.strata.values().map(|s| s.weight_sum).sum()
    }

    /// Draw a stratum index with probability proportional to its weight
    /// table entry; empty strata are never selected.
    pub fn select_stratum(&self, rng: &mut impl Rng) -> Result<i32> {
        let live: Vec<(i32, f64)> = self
            .strata
            .iter()
            .filter(|(_, s)| !s.fifo.is_empty())
            .map(|(&k, s)| (k, s.weight_sum.max(0.0)))
            .collect();
        if live.is_empty() {
            return Err(Error::EmptyStore);
        }
        let total: f64 = live.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Ok(live[0].0);
        }
        let mut draw = rng.gen::<f64>() * total;
        for &(k, w) in &live {
            draw -= w;
            if draw < 0.0 {
                return Ok(k);
            }
        }
        Ok(live.last().unwrap().0)
    }

    /// One stratified sampling step: pop the head of a weighted-selected
    /// stratum, refresh its weight against the snapshot, accept with
    /// probability w / 2^(k+1), and write the refreshed record back to the
    /// stratum of its new band either way.
    pub fn sample_step(
        &mut self,
        snapshot: &Ensemble,
        rng: &mut impl Rng,
    ) -> Result<Option<StampedExample>> {
        let k = self.select_stratum(rng)?;
        let s = self.strata.get_mut(&k).unwrap();
        let ex = s
            .fifo
            .pop()
            .map_err(|e| wrap_storage(k, e))?
            .expect("selected stratum is nonempty");
        s.weight_sum = (s.weight_sum - ex.last_weight).max(0.0);
        self.total -= 1;

        let refreshed = update_weight(&ex, snapshot)?;
        let k2 = stratum_index(refreshed.last_weight)?;
        let accept = rng.gen::<f64>() < refreshed.last_weight / ((k2 + 1) as f64).exp2();
        let w = refreshed.last_weight;
        let dst = self.stratum_mut(k2)?;
        dst.fifo.push(refreshed.clone()).map_err(|e| wrap_storage(k2, e))?;
        dst.weight_sum += w;
        self.total += 1;

        self.ops += 1;
        if self.ops % self.recount_interval == 0 {
            self.recount_weights()?;
        }
        Ok(accept.then_some(refreshed))
    }

    /// Repeat sampling steps until `n` acceptances; the result carries unit
    /// weights stamped at the snapshot version.
    pub fn assemble_sample(
        &mut self,
        snapshot: &Ensemble,
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<SampleSet> {
        if n == 0 {
            return Error::invalid("sample size must be at least 1");
        }
        if self.total < n {
            return Err(Error::InsufficientData { needed: n, available: self.total });
        }
        let mut examples = Vec::with_capacity(n);
        while examples.len() < n {
            if let Some(acc) = self.sample_step(snapshot, rng)? {
                examples.push(StampedExample {
                    example: acc.example,
                    last_weight: 1.0,
                    last_version: snapshot.version(),
                });
            }
        }
        Ok(SampleSet { examples, version: snapshot.version() })
    }

    /// Exact recount of the per-stratum weight tables; cancels the float
    /// drift of incremental add/subtract maintenance.
    pub fn recount_weights(&mut self) -> Result<()> {
        for (&k, s) in self.strata.iter_mut() {
            let mut sum = KahanSum::new();
            for ex in s.fifo.snapshot().map_err(|e| wrap_storage(k, e))? {
                sum.add(ex.last_weight);
            }
            s.weight_sum = sum.value();
        }
        Ok(())
    }

    /// All live records, for audits and equivalence checks.
    pub fn snapshot_records(&self) -> Result<Vec<(i32, StampedExample)>> {
        let mut out = Vec::with_capacity(self.total);
        for (&k, s) in &self.strata {
            for ex in s.fifo.snapshot().map_err(|e| wrap_storage(k, e))? {
                out.push((k, ex));
            }
        }
        Ok(out)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "total {}", self.total)?;
        writeln!(w, "strata {}", self.strata.len())?;
        for (&k, s) in &self.strata {
            let segs: Vec<String> = s
                .fifo
                .segment_paths()
                .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
                .collect();
            writeln!(
                w,
                "stratum {k} count {} weight_sum {:.16e} segments {}",
                s.fifo.len(),
                s.weight_sum,
                if segs.is_empty() { "-".into() } else { segs.join(",") }
            )?;
        }
        Ok(())
    }
}

fn wrap_storage(stratum: i32, e: Error) -> Error {
    match e {
        Error::Io(source) => Error::Storage { stratum, source },
        other => other,
    }
}

/// Stateful minimal-variance (systematic) sampler: accumulate capped
/// weights and accept one copy each time the sum crosses `offset + j*theta`.
pub struct MvSampler {
    theta: f64,
    cum: f64,
    next_mark: f64,
}

impl MvSampler {
    pub fn new(theta: f64, offset: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Error::invalid("theta must be positive and finite");
        }
        if !(0.0..theta).contains(&offset) {
            return Error::invalid("offset must lie in [0, theta)");
        }
        Ok(Self { theta, cum: 0.0, next_mark: offset })
    }

    /// Returns true when this example is accepted. Weights are capped at
    /// theta, so each example is accepted at most once with probability
    /// min(w, theta) / theta.
    pub fn offer(&mut self, weight: f64) -> bool {
        self.cum += weight.min(self.theta);
        if self.cum > self.next_mark {
            self.next_mark += self.theta;
            true
        } else {
            false
        }
    }
}

/// Systematic sampling over a weighted stream with a single random offset.
pub fn mv_sample<T>(
    stream: impl IntoIterator<Item = (T, f64)>,
    theta: f64,
    offset: f64,
) -> Result<Vec<T>> {
    let mut sampler = MvSampler::new(theta, offset)?;
    Ok(stream
        .into_iter()
        .filter_map(|(item, w)| sampler.offer(w).then_some(item))
        .collect())
}
