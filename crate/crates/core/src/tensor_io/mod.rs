//! On-disk formats: binary tensors, sample bundles, profile banks, and
//! prune reports.
//!
//! Tensor file layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes   "HRTN"
//! version  u32       1
//! rank     u32
//! dims     rank × u64
//! payload  product(dims) × f32, row-major
//! ```
//!
//! Bundles are directories holding one tensor file per member plus a JSON
//! manifest; profile banks and reports are JSON documents.

mod bank;
mod bundle;
mod report;

use std::fs;
use std::path::Path;

pub use bank::{load_profile_bank, save_profile_bank, BankDocument};
pub use bundle::{load_bundle, save_bundle, BundleManifest, Category, SampleBundle, MANIFEST_FILE};
pub use report::{read_report, write_report, PruneReport, RoutingReport};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HRTN";
pub const FORMAT_VERSION: u32 = 1;

/// A dense row-major `f32` tensor whose values are all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Shape("tensor rank must be at least 1".into()));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!("dimension {axis} is zero")));
        }
        let numel = checked_numel(&dims)?;
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} hold {numel} elements but data has {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }

    pub fn encoded_len(&self) -> usize {
        header_len(self.dims.len()) + 4 * self.data.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cursor.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = cursor.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let rank = cursor.u32()? as usize;
        if rank == 0 {
            return Err(Error::Shape("tensor rank must be at least 1".into()));
        }
        // Bound the dims allocation by what the file can actually hold.
        let needed = 8u64 * rank as u64;
        if cursor.remaining() < needed {
            return Err(Error::Truncated {
                expected: cursor.pos as u64 + needed,
                actual: bytes.len() as u64,
            });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cursor.u64()?;
            let d = usize::try_from(d)
                .map_err(|_| Error::Shape(format!("dimension {d} exceeds address space")))?;
            dims.push(d);
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!("dimension {axis} is zero")));
        }
        let numel = checked_numel(&dims)?;
        let payload_len = (numel as u64)
            .checked_mul(4)
            .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))?;
        let expected = cursor.pos as u64 + payload_len;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(Error::TrailingBytes(actual - expected));
        }
        let payload = &bytes[cursor.pos..];
        let mut data = Vec::with_capacity(numel);
        for (index, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
            data.push(v);
        }
        Ok(Self { dims, data })
    }
}

fn header_len(rank: usize) -> usize {
    4 + 4 + 4 + 8 * rank
}

fn checked_numel(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> u64 {
        (self.bytes.len() - self.pos) as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes)
}
