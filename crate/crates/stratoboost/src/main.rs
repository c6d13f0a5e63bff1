use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use stratoboost::booster::train;
use stratoboost::config::BoostConfig;
use stratoboost::error::Result;
use stratoboost::io::{ingest, read_all_examples, InputFormat};
use stratoboost::scanner::full_scan_best;
use stratoboost::weak_learner::{build_bins, candidate_rules, Ensemble};
use stratoboost::{eval, scanner, stopping};

#[derive(Parser)]
#[command(name = "stratoboost", version, about = "Boosted decision rules trained from disk-resident data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a text dataset, shuffle it, and write the binary record store.
    Ingest {
        /// Input text file (csv or sparse-text).
        input: PathBuf,
        /// Output store path.
        #[arg(long, short)]
        out: PathBuf,
        /// Input format: csv | sparse.
        #[arg(long, default_value = "csv")]
        format: InputFormat,
        /// Feature dimension; inferred when omitted.
        #[arg(long)]
        dim: Option<usize>,
        /// Shuffle seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train an ensemble from an ingested store.
    Train {
        /// Store produced by `ingest`.
        store: PathBuf,
        /// Flat key=value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output model path.
        #[arg(long, short)]
        out: PathBuf,
        /// Working directory for the stratified store (default: alongside the model).
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Cap on the in-memory sample, in megabytes.
        #[arg(long)]
        memory_budget: Option<usize>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print one score per example.
    Predict {
        model: PathBuf,
        store: PathBuf,
    },
    /// Print evaluation metrics for a model over a store.
    Eval {
        model: PathBuf,
        store: PathBuf,
        /// Also append a CSV row `exp_loss,auroc,n` to this file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare the early-stopped scan with a full pass on one rule search.
    BenchScan {
        store: PathBuf,
        /// Advantage target for the early-stopped scan.
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        /// Candidate thresholds per feature.
        #[arg(long, default_value_t = 16)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, out, format, dim, seed } => {
            let manifest = ingest(&input, format, &out, dim, seed)?;
            println!("store={}", out.display());
            println!("dim={}", manifest.dimension);
            println!("count={}", manifest.count);
        }
        Command::Train { store, config, out, work_dir, memory_budget, seed } => {
            let mut cfg = BoostConfig::default();
            cfg.apply_file(&config)?;
            if let Some(mb) = memory_budget {
                cfg.memory_budget_mb = Some(mb);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let work = work_dir.unwrap_or_else(|| out.with_extension("work"));
            std::fs::create_dir_all(&work)?;
            let mut log_line = |r: &stratoboost::booster::RuleRecord| {
                println!(
                    "rule={} gamma={:.6} alpha={:.6} edge={:.6} scanned={} ess_ratio={:.4} epoch={} elapsed={:.3}",
                    r.index, r.gamma, r.alpha, r.edge, r.scanned, r.ess_ratio, r.epoch, r.elapsed_secs
                );
            };
            let result = train(&store, &cfg, &work, Some(&mut log_line))?;
            let mut w = BufWriter::new(File::create(&out)?);
            result.ensemble.save(&mut w)?;
            w.flush()?;
            result.store.write_manifest(&work.join("store.manifest"))?;
            println!(
                "model={} rules={} epochs={} sample_bytes={}",
                out.display(),
                result.ensemble.version(),
                result.epochs,
                result.sample_bytes
            );
        }
        Command::Predict { model, store } => {
            let ensemble = Ensemble::load(BufReader::new(File::open(&model)?))?;
            let (_, examples) = read_all_examples(&store)?;
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            for ex in &examples {
                writeln!(w, "{:.17e}", ensemble.score(&ex.features)?)?;
            }
            w.flush()?;
        }
        Command::Eval { model, store, log } => {
            let ensemble = Ensemble::load(BufReader::new(File::open(&model)?))?;
            let (_, examples) = read_all_examples(&store)?;
            let report = eval::report(&ensemble, &examples)?;
            println!("exp_loss={:.6}", report.exp_loss);
            println!("auroc={:.6}", report.auroc);
            println!("n_examples={}", report.n_examples);
            if let Some(path) = log {
                let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
                writeln!(f, "{:.6},{:.6},{}", report.exp_loss, report.auroc, report.n_examples)?;
            }
        }
        Command::BenchScan { store, gamma, bins, seed } => {
            let (_, examples) = read_all_examples(&store)?;
            let cuts = build_bins(&examples, bins)?;
            let root = vec![Vec::new()];
            let candidates = candidate_rules(&cuts, &root);
            let snapshot = Ensemble::new(examples.first().map_or(0, |e| e.features.len()));
            let mut sample: Vec<_> = examples
                .into_iter()
                .map(stratoboost::core::StampedExample::fresh)
                .collect();
            let _ = seed; // scan order is the store order; seed reserved

            let cfg = stopping::default_config(candidates.len());
            let t = Instant::now();
            let outcome = scanner::scan(&mut sample, &snapshot, &candidates, gamma, &cfg)?;
            let early_secs = t.elapsed().as_secs_f64();
            let (scanned, label) = match &outcome {
                scanner::ScanOutcome::Fired { examples_scanned, rule, empirical_edge, .. } => {
                    println!("fired_feature={}", rule.feature);
                    println!("fired_threshold={:.6}", rule.threshold);
                    println!("fired_edge={empirical_edge:.6}");
                    (*examples_scanned, "fired")
                }
                scanner::ScanOutcome::Exhausted { .. } => (sample.len(), "exhausted"),
            };
            let t = Instant::now();
            let (_, full_edge, full_scanned) = full_scan_best(&mut sample, &snapshot, &candidates)?;
            let full_secs = t.elapsed().as_secs_f64();
            println!("candidates={}", candidates.len());
            println!("early_outcome={label}");
            println!("early_scanned={scanned}");
            println!("early_secs={early_secs:.6}");
            println!("full_scanned={full_scanned}");
            println!("full_secs={full_secs:.6}");
            println!("full_best_edge={full_edge:.6}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
