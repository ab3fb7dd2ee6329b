//! The TTEN raw tensor format.
//!
//! Layout: magic `TTEN`, version byte (1), dtype byte (1 = f32, 2 = f64),
//! rank byte, `rank` little-endian u32 extents, then the row-major
//! little-endian payload.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Element, Tensor};

pub const MAGIC: &[u8; 4] = b"TTEN";
pub const VERSION: u8 = 1;

/// A decoded tensor of either dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.shape(),
            AnyTensor::F64(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    /// Converts to the requested element type (exact when dtypes agree).
    pub fn into_tensor<F: Element>(self) -> Tensor<F> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<F: Element>(tensor: &Tensor<F>, out: &mut impl Write) -> std::io::Result<()> {
    let rank = u8::try_from(tensor.rank())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "rank exceeds 255"))?;
    let mut header = Vec::with_capacity(7 + 4 * tensor.rank());
    header.extend_from_slice(MAGIC);
    header.push(VERSION);
    header.push(F::DTYPE as u8);
    header.push(rank);
    for &d in tensor.shape() {
        let d = u32::try_from(d).map_err(|_| {
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "extent exceeds u32")
        })?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    out.write_all(&header)?;
    let mut payload = Vec::with_capacity(tensor.numel() * F::DTYPE.width());
    for &v in tensor.data() {
        v.extend_le_bytes(&mut payload);
    }
    out.write_all(&payload)
}

pub fn to_bytes<F: Element>(tensor: &Tensor<F>) -> Vec<u8> {
    let mut buf = Vec::new();
    encode(tensor, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Reads one TTEN record from a stream.
pub fn decode(input: &mut impl Read) -> Result<AnyTensor> {
    let mut head = [0u8; 7];
    read_exact(input, &mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected TTEN", &head[..4])));
    }
    if head[4] != VERSION {
        return Err(Error::Format(format!("unsupported TTEN version {}", head[4])));
    }
    let dtype = match head[5] {
        1 => DType::F32,
        2 => DType::F64,
        other => return Err(Error::Format(format!("unknown dtype byte {other}"))),
    };
    let rank = head[6] as usize;
    let mut dims = vec![0u8; 4 * rank];
    read_exact(input, &mut dims)?;
    let shape: Vec<usize> = dims
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("tensor extents overflow".into()))?;
    let bytes = numel
        .checked_mul(dtype.width())
        .ok_or_else(|| Error::Format("tensor payload overflow".into()))?;
    // Read incrementally so a bogus header cannot force a huge allocation.
    let mut payload = Vec::new();
    input
        .take(bytes as u64)
        .read_to_end(&mut payload)
        .map_err(|e| Error::Format(format!("reading payload: {e}")))?;
    if payload.len() != bytes {
        return Err(Error::Format(format!(
            "truncated payload: expected {bytes} bytes, got {}",
            payload.len()
        )));
    }
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(Tensor::new(
            shape,
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )?),
        DType::F64 => AnyTensor::F64(Tensor::new(
            shape,
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )?),
    })
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<AnyTensor> {
    let t = decode(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len())));
    }
    Ok(t)
}

pub fn write_file<F: Element>(path: impl AsRef<Path>, tensor: &Tensor<F>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(tensor)).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

fn read_exact(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|_| Error::Format("truncated TTEN header".into()))
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}
