//! Binary tensor files.
//!
//! Layout, all little-endian: magic `GSET`, version `u32` (1), rank `u32`,
//! one `u64` per dimension, precision flag `u8` (0 = f32, 1 = f64), then
//! the raw row-major data. A file is valid when its length matches the
//! header exactly and every value is finite.

use std::fs;
use std::io::Write;
use std::path::Path;

use gse_core::{Precision, Real, Tensor};

use crate::error::{GseError, Result};

pub const MAGIC: &[u8; 4] = b"GSET";
pub const VERSION: u32 = 1;

pub fn encode<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let width = std::mem::size_of::<T>();
    let mut out = Vec::with_capacity(13 + 8 * t.rank() + width * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.push(T::PRECISION as u8);
    for &v in t.data() {
        match T::PRECISION {
            Precision::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            Precision::F64 => out.extend_from_slice(&v.as_f64().to_le_bytes()),
        }
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
    if buf.len() < n {
        return None;
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Some(head)
}

/// Decodes a tensor, converting to `T` if the stored precision differs.
pub fn decode<T: Real>(bytes: &[u8]) -> std::result::Result<Tensor<T>, String> {
    let mut buf = bytes;
    let short = || "truncated header".to_string();
    if take(&mut buf, 4).ok_or_else(short)? != MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(&mut buf, 4).ok_or_else(short)?);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let rank = u32_at(take(&mut buf, 4).ok_or_else(short)?) as usize;
    if !(1..=4).contains(&rank) {
        return Err(format!("rank {rank} outside 1..=4"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(take(&mut buf, 8).ok_or_else(short)?.try_into().unwrap());
        shape.push(usize::try_from(d).map_err(|_| "dimension overflow".to_string())?);
    }
    let precision = take(&mut buf, 1).ok_or_else(short)?[0];
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or("dimension overflow")?;
    let width = match precision {
        0 => 4,
        1 => 8,
        p => return Err(format!("unknown precision flag {p}")),
    };
    if buf.len() != count * width {
        return Err(format!("expected {} data bytes, found {}", count * width, buf.len()));
    }
    let data: Vec<T> = if width == 4 {
        buf.chunks_exact(4)
            .map(|c| T::lit(f64::from(f32::from_le_bytes(c.try_into().unwrap()))))
            .collect()
    } else {
        buf.chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect()
    };
    let t = Tensor::new(&shape, data).map_err(|e| e.to_string())?;
    if !t.all_finite() {
        return Err("non-finite values".into());
    }
    Ok(t)
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| GseError::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| GseError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| GseError::io(&tmp, e))?;
    f.sync_all().map_err(|e| GseError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| GseError::io(path, e))
}

pub fn save<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode(t))
}

pub fn load<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let bytes = fs::read(path).map_err(|e| GseError::io(path, e))?;
    decode(&bytes).map_err(|m| GseError::format(path, m))
}

/// True when `path` exists and decodes cleanly.
pub fn is_valid(path: &Path) -> bool {
    fs::read(path).is_ok_and(|b| decode::<f64>(&b).is_ok())
}
