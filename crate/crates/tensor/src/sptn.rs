//! SPTN v1 binary tensor files.
//!
//! Layout (little-endian): magic `SPTN`, u32 version, u8 dtype code, u8 ndim,
//! two zero bytes, `ndim` u64 extents, then the row-major payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::{check_shape, DType, Tensor};

pub const MAGIC: [u8; 4] = *b"SPTN";
pub const VERSION: u32 = 1;

/// Any array that can live in an SPTN file.
#[derive(Debug, Clone, PartialEq)]
pub enum SptnArray {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    U8 { shape: Vec<usize>, data: Vec<u8> },
}

impl SptnArray {
    pub fn u8(shape: &[usize], data: Vec<u8>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("{} bytes for {n} elements", data.len()),
            });
        }
        Ok(SptnArray::U8 {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn dtype(&self) -> DType {
        match self {
            SptnArray::F32(_) => DType::F32,
            SptnArray::F64(_) => DType::F64,
            SptnArray::U8 { .. } => DType::U8,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            SptnArray::F32(t) => t.shape(),
            SptnArray::F64(t) => t.shape(),
            SptnArray::U8 { shape, .. } => shape,
        }
    }

    pub fn into_f32(self) -> Result<Tensor<f32>> {
        match self {
            SptnArray::F32(t) => Ok(t),
            other => Err(TensorError::Format(format!("expected f32, found {:?}", other.dtype()))),
        }
    }

    pub fn into_u8(self) -> Result<(Vec<usize>, Vec<u8>)> {
        match self {
            SptnArray::U8 { shape, data } => Ok((shape, data)),
            other => Err(TensorError::Format(format!("expected u8, found {:?}", other.dtype()))),
        }
    }
}

impl From<Tensor<f32>> for SptnArray {
    fn from(t: Tensor<f32>) -> Self {
        SptnArray::F32(t)
    }
}

impl From<Tensor<f64>> for SptnArray {
    fn from(t: Tensor<f64>) -> Self {
        SptnArray::F64(t)
    }
}

pub fn encode(array: &SptnArray) -> Vec<u8> {
    let shape = array.shape();
    let mut out = Vec::with_capacity(12 + 8 * shape.len() + shape.iter().product::<usize>() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(array.dtype().code());
    out.push(shape.len() as u8);
    out.extend_from_slice(&[0, 0]);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match array {
        SptnArray::F32(t) => t.data().iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        SptnArray::F64(t) => t.data().iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        SptnArray::U8 { data, .. } => out.extend_from_slice(data),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<SptnArray> {
    let bad = |msg: String| TensorError::Format(msg);
    if bytes.len() < 12 {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dtype = DType::from_code(bytes[8]).ok_or_else(|| bad(format!("unknown dtype code {}", bytes[8])))?;
    let ndim = bytes[9] as usize;
    if bytes[10] != 0 || bytes[11] != 0 {
        return Err(bad("non-zero padding".into()));
    }
    let header = 12 + 8 * ndim;
    if bytes.len() < header {
        return Err(bad("truncated extents".into()));
    }
    let shape: Vec<usize> = bytes[12..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let n = check_shape(&shape)?;
    let payload = &bytes[header..];
    let expected = n
        .checked_mul(dtype.size())
        .ok_or_else(|| bad("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(bad(format!("payload is {} bytes, expected {expected}", payload.len())));
    }
    Ok(match dtype {
        DType::F32 => SptnArray::F32(Tensor::new(
            &shape,
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        )?),
        DType::F64 => SptnArray::F64(Tensor::new(
            &shape,
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        )?),
        DType::U8 => SptnArray::U8 {
            shape,
            data: payload.to_vec(),
        },
    })
}

pub fn write(path: impl AsRef<Path>, array: &SptnArray) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(array))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<SptnArray> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2, 3], vec![1.0f32; 6]).unwrap();
        let bytes = encode(&t.into());
        assert_eq!(&bytes[..4], &[0x53, 0x50, 0x54, 0x4E]);
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 0);
        assert_eq!(bytes[9], 2);
        assert_eq!(&bytes[10..12], &[0, 0]);
        assert_eq!(&bytes[12..20], &2u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &3u64.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 24);
    }

    #[test]
    fn u8_roundtrip() {
        let a = SptnArray::u8(&[2, 2], vec![0, 1, 254, 255]).unwrap();
        assert_eq!(decode(&encode(&a)).unwrap(), a);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let t = Tensor::new(&[4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&t.into());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode(&wrong).is_err());
    }
}
