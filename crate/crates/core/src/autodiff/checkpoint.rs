//! Flat binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//! magic `DSCKPT\0\0`, version, parameter count, then per parameter the name
//! length, UTF-8 name bytes, four dims, and the values as little-endian `f32`.

use std::io::{Read, Write};

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor4};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} exceeds u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(inp: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    inp.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_checkpoint(params: &ParamStore<f32>, out: &mut impl Write) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    put_u32(out, CHECKPOINT_VERSION as usize)?;
    put_u32(out, params.len())?;
    for p in params.iter() {
        put_u32(out, p.name.len())?;
        out.write_all(p.name.as_bytes())?;
        for d in p.value.dims().as_array() {
            put_u32(out, d)?;
        }
        let mut buf = Vec::with_capacity(p.value.len() * 4);
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a checkpoint into a fresh store (gradients and Adam state zeroed).
pub fn read_checkpoint(inp: &mut impl Read) -> Result<ParamStore<f32>> {
    let mut magic = [0u8; 8];
    inp.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("missing magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(inp)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(inp)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = get_u32(inp)? as usize;
        let mut name = vec![0u8; name_len];
        inp.read_exact(&mut name)
            .map_err(|_| Error::Checkpoint("truncated name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let mut d = [0usize; 4];
        for slot in &mut d {
            *slot = get_u32(inp)? as usize;
        }
        let dims = Dims::from(d);
        let mut raw = vec![0u8; dims.len() * 4];
        inp.read_exact(&mut raw)
            .map_err(|_| Error::Checkpoint(format!("truncated values for {name}")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.add(name, Tensor4::new(dims, data)?);
    }
    Ok(store)
}
