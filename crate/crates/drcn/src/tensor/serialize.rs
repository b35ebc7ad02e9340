//! Binary tensor blob used inside checkpoints.
//!
//! Layout (all little-endian):
//!   magic "DRCN", format version u32, tensor count u32;
//!   per tensor: name length u32, UTF-8 name, rank u32, dims u64 each,
//!   dtype tag u8 (0 = f64, 1 = f32), raw data.

use std::io::{Read, Write};

use super::{Result, TensorError};

pub const MAGIC: &[u8; 4] = b"DRCN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64,
    F32,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F64 => 0,
            DType::F32 => 1,
        }
    }
}

pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Write a sequence of named tensors. Compute stays f64; `dtype` selects the
/// on-disk width (f32 halves checkpoint size at the cost of precision).
pub fn write_tensors<W: Write>(
    w: &mut W,
    entries: &[(&str, &[usize], &[f64])],
    dtype: DType,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, shape, data) in entries {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in *shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&[dtype.tag()])?;
        match dtype {
            DType::F64 => {
                for &v in *data {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            DType::F32 => {
                for &v in *data {
                    w.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

fn read_exact_buf<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let b = read_exact_buf(r, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn read_tensors<R: Read>(r: &mut R) -> Result<Vec<TensorEntry>> {
    let magic = read_exact_buf(r, 4)?;
    if magic != MAGIC {
        return Err(TensorError::Format("bad magic, not a DRCN tensor blob".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(TensorError::Format(format!("unsupported format version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let name = String::from_utf8(read_exact_buf(r, name_len)?)
            .map_err(|e| TensorError::Format(format!("tensor name not UTF-8: {e}")))?;
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let b = read_exact_buf(r, 8)?;
            shape.push(u64::from_le_bytes(b.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let tag = read_exact_buf(r, 1)?[0];
        let data = match tag {
            0 => {
                let raw = read_exact_buf(r, numel * 8)?;
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            }
            1 => {
                let raw = read_exact_buf(r, numel * 4)?;
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect()
            }
            t => return Err(TensorError::Format(format!("unknown dtype tag {t}"))),
        };
        entries.push(TensorEntry { name, shape, data });
    }
    Ok(entries)
}
