//! Binary exit dump: `"NVLB"`, `u32` version, `u64` seed, then one 152-byte
//! little-endian record per path: `u64` index, `u32` sheet, `u8` censored
//! flag, `u8` real dimension, two padding bytes, `f64` exit time and sixteen
//! `f64` coordinates (zero-padded).

use std::io::{self, Read, Write};

use super::ExitRecord;
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"NVLB";
pub const DUMP_VERSION: u32 = 1;
const MAX_DIM: usize = 16;
const RECORD_LEN: usize = 152;

#[derive(Clone, Debug, PartialEq)]
pub struct DumpRecord {
    pub index: u64,
    pub sheet: u32,
    pub censored: bool,
    pub exit_time: f64,
    pub coords: Vec<f64>,
}

fn io_err(e: io::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_path_dump<W: Write>(mut w: W, seed: u64, records: &[ExitRecord]) -> Result<()> {
    w.write_all(DUMP_MAGIC).map_err(io_err)?;
    w.write_all(&DUMP_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&seed.to_le_bytes()).map_err(io_err)?;
    let mut buf = [0u8; RECORD_LEN];
    for (i, r) in records.iter().enumerate() {
        let x = &r.exit_point.coords;
        if x.len() > MAX_DIM {
            return Err(Error::Format(format!("dimension {} exceeds the dump limit {MAX_DIM}", x.len())));
        }
        buf.fill(0);
        buf[0..8].copy_from_slice(&(i as u64).to_le_bytes());
        buf[8..12].copy_from_slice(&(r.exit_point.sheet as u32).to_le_bytes());
        buf[12] = r.censored as u8;
        buf[13] = x.len() as u8;
        buf[16..24].copy_from_slice(&r.exit_time.to_le_bytes());
        for (k, v) in x.iter().enumerate() {
            buf[24 + 8 * k..32 + 8 * k].copy_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io_err)?;
    }
    Ok(())
}

/// Seed and records of a dump.
pub fn read_path_dump<R: Read>(mut r: R) -> Result<(u64, Vec<DumpRecord>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(io_err)?;
    if &head[0..4] != DUMP_MAGIC {
        return Err(Error::Format("not a path dump (bad magic)".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported dump version {version}")));
    }
    let seed = u64::from_le_bytes(head[8..16].try_into().unwrap());
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(io_err)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::Format("truncated dump record".into()));
    }
    let f64_at = |b: &[u8], o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let mut out = Vec::with_capacity(body.len() / RECORD_LEN);
    for b in body.chunks_exact(RECORD_LEN) {
        let dim = b[13] as usize;
        if dim > MAX_DIM {
            return Err(Error::Format(format!("record dimension {dim} exceeds {MAX_DIM}")));
        }
        out.push(DumpRecord {
            index: u64::from_le_bytes(b[0..8].try_into().unwrap()),
            sheet: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            censored: b[12] != 0,
            exit_time: f64_at(b, 16),
            coords: (0..dim).map(|k| f64_at(b, 24 + 8 * k)).collect(),
        });
    }
    Ok((seed, out))
}
