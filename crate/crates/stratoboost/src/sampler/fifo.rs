//! Segmented append-only FIFO of stamped records: writes buffer in memory
//! and spill to immutable segment files; reads advance a head cursor and
//! delete segments once fully consumed.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use crate::core::StampedExample;
use crate::error::Result;
use crate::record;

pub struct DiskFifo {
    dir: PathBuf,
    dim: usize,
    segment_limit: usize,
    segments: VecDeque<PathBuf>,
    head: Option<BufReader<File>>,
    head_consumed: usize,
    tail: VecDeque<StampedExample>,
    tail_bytes: usize,
    next_seg: u64,
    len: usize,
}

impl DiskFifo {
    pub fn create(dir: PathBuf, dim: usize, segment_limit: usize) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            dim,
            segment_limit: segment_limit.max(record::record_size(dim)),
            segments: VecDeque::new(),
            head: None,
            head_consumed: 0,
            tail: VecDeque::new(),
            tail_bytes: 0,
            next_seg: 0,
            len: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segment_paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.segments.iter()
    }

    pub fn push(&mut self, ex: StampedExample) -> Result<()> {
        self.tail.push_back(ex);
        self.tail_bytes += record::record_size(self.dim);
        self.len += 1;
        if self.tail_bytes >= self.segment_limit {
            self.flush_tail()?;
        }
        Ok(())
    }

    fn flush_tail(&mut self) -> Result<()> {
        if self.tail.is_empty() {
            return Ok(());
        }
        let path = self.dir.join(format!("seg_{:08}.dat", self.next_seg));
        self.next_seg += 1;
        let mut w = BufWriter::new(File::create(&path)?);
        record::write_header(&mut w, self.dim as u32)?;
        for ex in &self.tail {
            record::write_record(&mut w, ex)?;
        }
        w.flush()?;
        self.segments.push_back(path);
        self.tail.clear();
        self.tail_bytes = 0;
        Ok(())
    }

    pub fn pop(&mut self) -> Result<Option<StampedExample>> {
        loop {
            if self.head.is_none() {
                match self.segments.front() {
                    Some(path) => {
                        let mut r = BufReader::new(File::open(path)?);
                        record::read_header(&mut r)?;
                        self.head = Some(r);
                        self.head_consumed = 0;
                    }
                    None => {
                        let out = self.tail.pop_front();
                        if out.is_some() {
                            self.tail_bytes -= record::record_size(self.dim);
                            self.len -= 1;
                        }
                        return Ok(out);
                    }
                }
            }
            let reader = self.head.as_mut().unwrap();
            match record::read_record(reader, self.dim)? {
                Some(ex) => {
                    self.head_consumed += 1;
                    self.len -= 1;
                    if std::io::BufRead::fill_buf(reader)?.is_empty() {
                        self.head = None;
                        self.head_consumed = 0;
                        let path = self.segments.pop_front().unwrap();
                        fs::remove_file(path)?;
                    }
                    return Ok(Some(ex));
                }
                None => {
                    // segment fully consumed
                    self.head = None;
                    self.head_consumed = 0;
                    let path = self.segments.pop_front().unwrap();
                    fs::remove_file(path)?;
                }
            }
        }
    }

    /// Non-destructive copy of the live contents, head to tail. Used by
    /// audits and the periodic exact weight recount.
    pub fn snapshot(&self) -> Result<Vec<StampedExample>> {
        let mut out = Vec::with_capacity(self.len);
        for (i, path) in self.segments.iter().enumerate() {
            let mut r = BufReader::new(File::open(path)?);
            record::read_header(&mut r)?;
            let skip = if i == 0 && self.head.is_some() { self.head_consumed } else { 0 };
            let mut idx = 0;
            while let Some(ex) = record::read_record(&mut r, self.dim)? {
                if idx >= skip {
                    out.push(ex);
                }
                idx += 1;
            }
        }
        out.extend(self.tail.iter().cloned());
        Ok(out)
    }
}
