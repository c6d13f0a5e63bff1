//! Dataset ingestion: text formats to the binary record store, with an
//! external-memory shuffle so the store is a random permutation of the
//! input.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::{LabeledExample, StampedExample};
use crate::error::{Error, Result};
use crate::record;

const SHUFFLE_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    SparseText,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "sparse" | "sparse-text" => Ok(InputFormat::SparseText),
            other => Err(Error::Config(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub store_path: PathBuf,
    pub dimension: usize,
    pub count: usize,
    pub format: String,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn path_for(store: &Path) -> PathBuf {
        let name = store.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        store.with_file_name(format!("{name}.manifest"))
    }

    pub fn save(&self) -> Result<()> {
        let mut w = BufWriter::new(File::create(Self::path_for(&self.store_path))?);
        writeln!(w, "store={}", self.store_path.display())?;
        writeln!(w, "dim={}", self.dimension)?;
        writeln!(w, "count={}", self.count)?;
        writeln!(w, "format={}", self.format)?;
        writeln!(w, "seed={}", self.seed)?;
        Ok(())
    }
}

/// Streaming reader over a binary record store.
pub struct StoreReader {
    r: BufReader<File>,
    dim: usize,
}

impl StoreReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let dim = record::read_header(&mut r)? as usize;
        Ok(Self { r, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Iterator for StoreReader {
    type Item = Result<StampedExample>;
    fn next(&mut self) -> Option<Self::Item> {
        record::read_record(&mut self.r, self.dim).transpose()
    }
}

/// Dimension and record count, from the header and the file size.
pub fn store_info(path: &Path) -> Result<(usize, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    let dim = record::read_header(&mut r)? as usize;
    let len = fs::metadata(path)?.len();
    let body = len - record::HEADER_LEN;
    let rec = record::record_size(dim) as u64;
    if body % rec != 0 {
        return Error::invalid("store size is not a whole number of records");
    }
    Ok((dim, (body / rec) as usize))
}

fn parse_label(tok: &str, line: usize) -> Result<i8> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad label `{tok}`") })?;
    if v == 1.0 {
        Ok(1)
    } else if v == 0.0 || v == -1.0 {
        Ok(-1)
    } else {
        Err(Error::Parse { line, msg: format!("label `{tok}` is not in {{-1, 0, +1}}") })
    }
}

fn parse_csv_line(line: &str, lineno: usize, dim: Option<usize>) -> Result<LabeledExample> {
    let mut fields = line.split(',');
    let label = parse_label(
        fields.next().ok_or(Error::Parse { line: lineno, msg: "empty line".into() })?.trim(),
        lineno,
    )?;
    let mut features = Vec::new();
    for tok in fields {
        let v: f32 = tok
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad feature `{tok}`") })?;
        features.push(v);
    }
    if let Some(d) = dim {
        if features.len() != d {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {d} features, got {}", features.len()),
            });
        }
    }
    LabeledExample::new(features, label).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })
}

fn parse_sparse_line(line: &str, lineno: usize, dim: usize) -> Result<LabeledExample> {
    let mut toks = line.split_whitespace();
    let label = parse_label(
        toks.next().ok_or(Error::Parse { line: lineno, msg: "empty line".into() })?,
        lineno,
    )?;
    let mut features = vec![0.0f32; dim];
    for tok in toks {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| Error::Parse { line: lineno, msg: format!("bad pair `{tok}`") })?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad index `{idx}`") })?;
        if idx == 0 || idx > dim {
            return Err(Error::Parse { line: lineno, msg: format!("index {idx} out of range 1..={dim}") });
        }
        let val: f32 = val
            .parse()
            .map_err(|_| Error::Parse { line: lineno, msg: format!("bad value `{val}`") })?;
        features[idx - 1] = val;
    }
    LabeledExample::new(features, label).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })
}

fn spill_chunk(
    chunk: &mut Vec<LabeledExample>,
    rng: &mut ChaCha8Rng,
    path: &Path,
    dim: usize,
) -> Result<()> {
    chunk.shuffle(rng);
    let mut w = BufWriter::new(File::create(path)?);
    record::write_header(&mut w, dim as u32)?;
    for ex in chunk.drain(..) {
        record::write_record(&mut w, &StampedExample::fresh(ex))?;
    }
    w.flush()?;
    Ok(())
}

/// Largest 1-based index used anywhere in a sparse file.
fn sparse_max_index(path: &Path) -> Result<usize> {
    let r = BufReader::new(File::open(path)?);
    let mut max = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        for tok in line.split_whitespace().skip(1) {
            let idx: usize = tok
                .split_once(':')
                .and_then(|(i, _)| i.parse().ok())
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("bad pair `{tok}`") })?;
            max = max.max(idx);
        }
    }
    Ok(max)
}

/// Parse a text dataset, shuffle it globally (chunk-shuffle then seeded
/// random merge), and write the binary record store plus its manifest.
/// Labels {0, 1} are mapped to {-1, +1}; records start at weight 1,
/// version 0.
pub fn ingest(
    input: &Path,
    format: InputFormat,
    out: &Path,
    dim: Option<usize>,
    seed: u64,
) -> Result<DatasetManifest> {
    let dim = match (format, dim) {
        (InputFormat::Csv, d) => d, // taken from the first row if absent
        (InputFormat::SparseText, Some(d)) => Some(d),
        (InputFormat::SparseText, None) => Some(sparse_max_index(input)?),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunk_dir = out.with_file_name(format!(
        "{}.chunks",
        out.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    fs::create_dir_all(&chunk_dir)?;

    // pass 1: parse, shuffle in chunks, spill
    let reader = BufReader::new(File::open(input)?);
    let mut resolved_dim = dim;
    let mut chunk: Vec<LabeledExample> = Vec::with_capacity(SHUFFLE_CHUNK);
    let mut chunk_paths: Vec<PathBuf> = Vec::new();
    let mut count = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = match format {
            InputFormat::Csv => parse_csv_line(&line, i + 1, resolved_dim)?,
            InputFormat::SparseText => parse_sparse_line(&line, i + 1, resolved_dim.unwrap())?,
        };
        if resolved_dim.is_none() {
            resolved_dim = Some(ex.features.len());
        }
        chunk.push(ex);
        count += 1;
        if chunk.len() >= SHUFFLE_CHUNK {
            let path = chunk_dir.join(format!("chunk_{:06}.dat", chunk_paths.len()));
            spill_chunk(&mut chunk, &mut rng, &path, resolved_dim.unwrap())?;
            chunk_paths.push(path);
        }
    }
    if !chunk.is_empty() {
        let path = chunk_dir.join(format!("chunk_{:06}.dat", chunk_paths.len()));
        spill_chunk(&mut chunk, &mut rng, &path, resolved_dim.unwrap())?;
        chunk_paths.push(path);
    }
    if count == 0 {
        fs::remove_dir_all(&chunk_dir).ok();
        return Error::invalid("input contains no examples");
    }
    let dim = resolved_dim.unwrap();

    // pass 2: merge chunks in seeded random interleave
    let mut readers: Vec<(StoreReader, usize)> = Vec::new();
    for path in &chunk_paths {
        let (_, n) = store_info(path)?;
        readers.push((StoreReader::open(path)?, n));
    }
    let mut w = BufWriter::new(File::create(out)?);
    record::write_header(&mut w, dim as u32)?;
    let mut remaining: usize = readers.iter().map(|(_, n)| n).sum();
    while remaining > 0 {
        let mut pick = rng.gen_range(0..remaining);
        let idx = readers
            .iter()
            .position(|(_, n)| {
                if pick < *n {
                    true
                } else {
                    pick -= n;
                    false
                }
            })
            .unwrap();
        let ex = readers[idx].0.next().unwrap()?;
        record::write_record(&mut w, &ex)?;
        readers[idx].1 -= 1;
        remaining -= 1;
    }
    w.flush()?;
    drop(readers);
    fs::remove_dir_all(&chunk_dir)?;

    let manifest = DatasetManifest {
        store_path: out.to_path_buf(),
        dimension: dim,
        count,
        format: match format {
            InputFormat::Csv => "csv".into(),
            InputFormat::SparseText => "sparse-text".into(),
        },
        seed,
    };
    manifest.save()?;
    Ok(manifest)
}

/// Load a whole store into memory (plain examples, stamps dropped).
pub fn read_all_examples(path: &Path) -> Result<(usize, Vec<LabeledExample>)> {
    let reader = StoreReader::open(path)?;
    let dim = reader.dim();
    let examples: Vec<LabeledExample> =
        reader.map(|r| r.map(|s| s.example)).collect::<Result<_>>()?;
    Ok((dim, examples))
}
