//! Binary record codec shared by the dataset store and the stratum segments.
//!
//! Record layout (little-endian):
//! `[label: i8 (-1/+1)] [version: u32] [weight: f64] [features: dim x f32]`.
//! Segment header: magic `SPRW`, format version u16, dimension u32.

use std::io::{self, Read, Write};

use crate::core::{LabeledExample, StampedExample};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SPRW";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 10;

pub fn record_size(dim: usize) -> usize {
    1 + 4 + 8 + 4 * dim
}

pub fn write_header(w: &mut impl Write, dim: u32) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())
}

pub fn read_header(r: &mut impl Read) -> Result<u32> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Error::invalid("bad store magic");
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)?;
    if u16::from_le_bytes(ver) != FORMAT_VERSION {
        return Error::invalid("unsupported store format version");
    }
    let mut dim = [0u8; 4];
    r.read_exact(&mut dim)?;
    Ok(u32::from_le_bytes(dim))
}

pub fn write_record(w: &mut impl Write, ex: &StampedExample) -> io::Result<()> {
    w.write_all(&[ex.example.label as u8])?;
    w.write_all(&ex.last_version.to_le_bytes())?;
    w.write_all(&ex.last_weight.to_le_bytes())?;
    for &f in &ex.example.features {
        w.write_all(&f.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one record; `Ok(None)` on clean end-of-stream.
pub fn read_record(r: &mut impl Read, dim: usize) -> Result<Option<StampedExample>> {
    let mut label = [0u8; 1];
    match r.read_exact(&mut label) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let label = label[0] as i8;
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let mut weight = [0u8; 8];
    r.read_exact(&mut weight)?;
    let mut features = Vec::with_capacity(dim);
    let mut buf = [0u8; 4];
    for _ in 0..dim {
        r.read_exact(&mut buf)?;
        features.push(f32::from_le_bytes(buf));
    }
    Ok(Some(StampedExample {
        example: LabeledExample::new(features, label)?,
        last_weight: f64::from_le_bytes(weight),
        last_version: u32::from_le_bytes(version),
    }))
}
