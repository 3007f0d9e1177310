//! FMAT dense matrix files: `b"FMAT"`, `u32` rows, `u32` cols (little
//! endian), then `rows * cols` row-major `f64` little-endian values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"FMAT";

/// Row-major `f64` matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Fmat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Fmat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if rows > u32::MAX as usize || cols > u32::MAX as usize {
            return Err(Error::invalid("matrix dimensions exceed u32"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_matrix<T: Real>(m: &DMatrix<T>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)].as_f64());
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn from_rows<T: Real, const C: usize>(rows: &[[T; C]]) -> Self {
        Self {
            rows: rows.len(),
            cols: C,
            data: rows.iter().flat_map(|r| r.iter().map(|v| v.as_f64())).collect(),
        }
    }

    pub fn column<T: Real>(values: &[T]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn to_matrix<T: Real>(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            T::lit(self.data[i * self.cols + j])
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::parse("offset 0", "missing FMAT magic"));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::parse("offset 4", "dimension overflow"))?;
        let payload = &bytes[12..];
        if payload.len() != expected {
            return Err(Error::parse(
                format!("offset {}", 12 + payload.len().min(expected)),
                format!("expected {expected} payload bytes, found {}", payload.len()),
            ));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { rows, cols, data })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.encode())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = Fmat::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = m.encode();
        assert_eq!(&bytes[..4], b"FMAT");
        assert_eq!(&bytes[4..8], &[2, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[52..60], &6.0f64.to_le_bytes());
        assert_eq!(m.to_matrix::<f64>()[(1, 0)], 4.0);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = Fmat::new(1, 2, vec![1.0, 2.0]).unwrap().encode();
        bytes.pop();
        assert!(Fmat::decode(&bytes).is_err());
        assert!(Fmat::decode(b"FMA").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols)
                .map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2))
                .collect();
            let m = Fmat::new(rows, cols, data).unwrap();
            let back = Fmat::decode(&m.encode()).unwrap();
            prop_assert_eq!(back.rows, rows);
            prop_assert_eq!(back.cols, cols);
            for (a, b) in m.data.iter().zip(&back.data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
