//! SYNV: a flat little-endian block of `count` float32 vectors of length `dim`.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SYNV"
//! 4       2     version (u16 LE, = 1)
//! 6       2     reserved (u16, 0)
//! 8       4     count (u32 LE)
//! 12      4     dim (u32 LE)
//! 16      4*count*dim  payload, IEEE-754 binary32 LE, row-major
//! ```

use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SYNV";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum SynvError {
    #[error("truncated header ({0} bytes)")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported SYNV version {0}")]
    BadVersion(u16),
    #[error("payload holds {actual} bytes, header promises {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("non-finite value at vector {row}, component {col}")]
    NonFinite { row: usize, col: usize },
    #[error("ragged rows: row {row} has length {len}, expected {dim}")]
    Ragged { row: usize, len: usize, dim: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A decoded SYNV block.
#[derive(Debug, Clone, PartialEq)]
pub struct SynvBlock {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl SynvBlock {
    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Builds a block from equally sized rows, widening nothing and narrowing
    /// `f64` to `f32`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, SynvError> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(SynvError::Ragged { row, len: r.len(), dim });
            }
            for (col, &v) in r.iter().enumerate() {
                let v = v as f32;
                if !v.is_finite() {
                    return Err(SynvError::NonFinite { row, col });
                }
                data.push(v);
            }
        }
        Ok(Self { dim, data })
    }

    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>, SynvError> {
        let count = self.count();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(SynvError::NonFinite {
                    row: i / self.dim.max(1),
                    col: i % self.dim.max(1),
                });
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SynvError> {
        if bytes.len() < HEADER_LEN {
            return Err(SynvError::Truncated(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != MAGIC {
            return Err(SynvError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(SynvError::BadVersion(version));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let payload = &bytes[HEADER_LEN..];
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .unwrap_or(usize::MAX);
        if payload.len() != expected {
            return Err(SynvError::PayloadLength {
                expected,
                actual: payload.len(),
            });
        }
        let mut data = Vec::with_capacity(count * dim);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(SynvError::NonFinite {
                    row: i / dim,
                    col: i % dim,
                });
            }
            data.push(v);
        }
        Ok(Self { dim, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SynvError> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SynvError> {
        Self::decode(&std::fs::read(path)?)
    }
}
