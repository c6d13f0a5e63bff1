//! Training configuration and the flat `key = value` config file.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::record;
use crate::scanner::GAMMA_FLOOR;
use crate::stopping::StoppingConfig;

/// Stopping-rule knobs as configured; `b` is derived from sigma (or from
/// the candidate count when sigma is unset) at scan time.
#[derive(Clone, Copy, Debug)]
pub struct StoppingParams {
    pub c: f64,
    /// Explicit one-sided error level; default is 0.001 / num_candidates.
    pub sigma: Option<f64>,
    pub t0: u64,
    pub check_interval: u64,
}

impl StoppingParams {
    pub fn build(&self, num_candidates: usize) -> StoppingConfig<f64> {
        let sigma = self.sigma.unwrap_or(0.001 / num_candidates.max(1) as f64);
        StoppingConfig { c: self.c, b: (1.0 / sigma).ln(), t0: self.t0, check_interval: self.check_interval }
    }
}

#[derive(Clone, Debug)]
pub struct BoostConfig {
    /// In-memory sample size n.
    pub sample_size: usize,
    /// Resample when n_eff / n drops below this.
    pub ess_threshold: f64,
    /// Stop after this many fired rules.
    pub max_rules: usize,
    pub gamma_init: f64,
    pub max_leaves: usize,
    pub bins: usize,
    pub stopping: StoppingParams,
    pub seed: u64,
    /// Caps sample_size via the record size when set.
    pub memory_budget_mb: Option<usize>,
    pub wall_clock_secs: Option<f64>,
    /// Stratum segment size on disk.
    pub segment_bytes: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            sample_size: 10_000,
            ess_threshold: 0.25,
            max_rules: 100,
            gamma_init: 0.25,
            max_leaves: 4,
            bins: 64,
            stopping: StoppingParams { c: 1.0, sigma: None, t0: 256, check_interval: 16 },
            seed: 0,
            memory_budget_mb: None,
            wall_clock_secs: None,
            segment_bytes: crate::sampler::DEFAULT_SEGMENT_BYTES,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 {
            return Err(Error::Config("sample_size must be positive".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(Error::Config("ess_threshold must lie in (0, 1]".into()));
        }
        if !(self.gamma_init > 0.0 && self.gamma_init < 0.5) {
            return Err(Error::Config("gamma_init must lie in (0, 0.5)".into()));
        }
        if self.max_leaves < 2 {
            return Err(Error::Config("max_leaves must be at least 2".into()));
        }
        if self.bins < 1 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if let Some(s) = self.stopping.sigma {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Config("stop.sigma must lie in (0, 1)".into()));
            }
        }
        if self.stopping.check_interval == 0 {
            return Err(Error::Config("stop.check_interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Sample size after applying the memory budget for records of the
    /// given dimension.
    pub fn capped_sample_size(&self, dim: usize) -> usize {
        match self.memory_budget_mb {
            Some(mb) => {
                let cap = (mb * 1024 * 1024) / record::record_size(dim);
                self.sample_size.min(cap.max(1))
            }
            None => self.sample_size,
        }
    }

    /// Overlay values from a flat `key = value` file (`#` comments).
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: lineno + 1, msg: "expected key = value".into() })?;
            self.apply_key(key.trim(), value.trim())
                .map_err(|e| Error::Parse { line: lineno + 1, msg: e.to_string() })?;
        }
        self.validate()
    }

    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "sample_size" => self.sample_size = num(key, value)?,
            "ess_threshold" => self.ess_threshold = num(key, value)?,
            "max_rules" => self.max_rules = num(key, value)?,
            "gamma_init" => self.gamma_init = num(key, value)?,
            "max_leaves" => self.max_leaves = num(key, value)?,
            "bins" => self.bins = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "memory_budget_mb" => self.memory_budget_mb = Some(num(key, value)?),
            "wall_clock_secs" => self.wall_clock_secs = Some(num(key, value)?),
            "segment_bytes" => self.segment_bytes = num(key, value)?,
            "stop.c" => self.stopping.c = num(key, value)?,
            "stop.sigma" => self.stopping.sigma = Some(num(key, value)?),
            "stop.t0" => self.stopping.t0 = num(key, value)?,
            "stop.check_interval" => self.stopping.check_interval = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }
}

/// Loose parser for key=value maps (manifests, training logs).
pub fn parse_kv_line(line: &str) -> HashMap<String, String> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// gamma_init heuristic: first tree uses the configured value; later trees
/// start from the largest advantage certified among the previous tree's
/// fired splits.
pub fn init_gamma(previous_tree_advantages: Option<&[f64]>, cfg: &BoostConfig) -> f64 {
    match previous_tree_advantages {
        None => cfg.gamma_init,
        Some(advantages) => {
            let max = advantages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max.is_finite() {
                max.clamp(GAMMA_FLOOR, 0.499)
            } else {
                cfg.gamma_init
            }
        }
    }
}
