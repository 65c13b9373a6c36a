//! Versioned little-endian binary checkpoints of named tensors.
//!
//! Layout: magic, version, header string, tensor count, then per tensor its
//! name, rank, dimensions and raw `f64` bits. Values round-trip bitwise.

use std::io::{Read, Write};
use std::path::Path;

use super::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TMSECKPT";
const VERSION: u32 = 1;

fn ck(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes()).map_err(ck)?;
    w.write_all(s.as_bytes()).map_err(ck)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(ck)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(ck)?;
    Ok(u64::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(ck)?;
    String::from_utf8(b).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// `header` is free text stored alongside the tensors (model kind, sizes).
pub fn write_checkpoint(w: &mut impl Write, header: &str, params: &ParamSet) -> Result<()> {
    w.write_all(MAGIC).map_err(ck)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(ck)?;
    put_str(w, header)?;
    w.write_all(&(params.len() as u32).to_le_bytes())
        .map_err(ck)?;
    for (name, t) in params.iter() {
        put_str(w, name)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())
            .map_err(ck)?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(ck)?;
        }
        for v in t.data() {
            w.write_all(&v.to_bits().to_le_bytes()).map_err(ck)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(String, ParamSet)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(ck)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header = get_str(r)?;
    let count = get_u32(r)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = get_str(r)?;
        let rank = get_u32(r)? as usize;
        let shape = (0..rank)
            .map(|_| get_u64(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| get_u64(r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        params.push(name, Tensor::new(&shape, data)?);
    }
    Ok((header, params))
}

pub fn save_checkpoint(path: impl AsRef<Path>, header: &str, params: &ParamSet) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, header, params)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(String, ParamSet)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut bytes.as_slice())
}
