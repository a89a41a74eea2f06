//! IDX container (the MNIST / FashionMNIST distribution format).
//!
//! Layout: two zero bytes, a type code, the number of dimensions, then one
//! big-endian `u32` per dimension followed by the payload. Only unsigned
//! bytes (type code `0x08`) are supported.

use crate::error::{Error, Result};

pub const TYPE_U8: u8 = 0x08;

/// A parsed IDX tensor of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {dims:?} need {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Size of one item (product of all but the leading dimension).
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        let mut magic = [0u8; 4];
        magic[..bytes.len()].copy_from_slice(bytes);
        return Err(Error::BadMagic(magic));
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic[0] != 0 || magic[1] != 0 || magic[3] == 0 {
        return Err(Error::BadMagic(magic));
    }
    if magic[2] != TYPE_U8 {
        return Err(Error::UnsupportedTypeCode(magic[2]));
    }

    let ndims = magic[3] as usize;
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(Error::TruncatedPayload {
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();

    let payload_len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ShapeMismatch(format!("dims {dims:?} overflow usize")))?;
    let body = &bytes[header_len..];
    if body.len() < payload_len {
        return Err(Error::TruncatedPayload {
            expected: payload_len,
            actual: body.len(),
        });
    }
    if body.len() > payload_len {
        return Err(Error::TrailingBytes(body.len() - payload_len));
    }
    Ok(IdxTensor {
        dims,
        data: body.to_vec(),
    })
}

pub fn serialize_idx(tensor: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&[0, 0, TYPE_U8, tensor.dims.len() as u8]);
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}
