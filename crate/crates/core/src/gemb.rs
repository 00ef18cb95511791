//! `GEMB` dense matrix files.
//!
//! Layout: 16-byte header (`b"GEMB"`, `u32` rows, `u32` dim, `u32` format
//! version) followed by `rows * dim` float32 values, all little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const MAGIC: &[u8; 4] = b"GEMB";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

pub fn encode(rows: usize, dim: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != rows * dim {
        return Err(Error::DimensionMismatch {
            expected: rows * dim,
            actual: values.len(),
        });
    }
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")));
    let mut buf = Vec::with_capacity(HEADER + values.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&to_u32(rows)?.to_le_bytes());
    buf.extend_from_slice(&to_u32(dim)?.to_le_bytes());
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(buf)
}

/// Returns `(rows, dim, values)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing GEMB header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (rows, dim, version) = (word(4), word(8), word(12) as u32);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported GEMB version {version}")));
    }
    let body = &bytes[HEADER..];
    if body.len() != rows * dim * 4 {
        return Err(Error::Format(format!(
            "GEMB body has {} bytes, header promises {rows}x{dim}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((rows, dim, values))
}

pub fn write(path: &Path, rows: usize, dim: usize, values: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(rows, dim, values)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowId {
    pub row: usize,
    pub id: String,
}

/// Writes the ids sidecar and the matrix for a set of named rows.
pub fn write_named(ids_path: &Path, matrix_path: &Path, ids: &[String], dim: usize, values: &[f64]) -> Result<()> {
    let rows: Vec<RowId> = ids
        .iter()
        .enumerate()
        .map(|(row, id)| RowId { row, id: id.clone() })
        .collect();
    jsonl::write(ids_path, &rows)?;
    write(matrix_path, ids.len(), dim, values)
}

/// Reads an ids sidecar and matrix pair; returns `(ids, dim, values)`.
pub fn read_named(ids_path: &Path, matrix_path: &Path) -> Result<(Vec<String>, usize, Vec<f64>)> {
    let mut rows: Vec<RowId> = jsonl::read(ids_path)?;
    rows.sort_by_key(|r| r.row);
    let (n, dim, values) = read(matrix_path)?;
    if rows.len() != n || rows.iter().enumerate().any(|(i, r)| r.row != i) {
        return Err(Error::Format(format!(
            "{}: ids do not cover rows 0..{n}",
            ids_path.display()
        )));
    }
    Ok((rows.into_iter().map(|r| r.id).collect(), dim, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let buf = encode(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(&buf[..4], b"GEMB");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..12], &3u32.to_le_bytes());
        assert_eq!(buf.len(), 16 + 24);
        assert_eq!(&buf[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_truncated_and_foreign() {
        let buf = encode(1, 2, &[1.0, 2.0]).unwrap();
        assert!(decode(&buf[..buf.len() - 1]).is_err());
        assert!(decode(b"NOPE0000000000000000").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_f32_exact(vals in prop::collection::vec(-1e6f32..1e6, 0..64)) {
            let dim = 4;
            let rows = vals.len() / dim;
            let vals: Vec<f64> = vals[..rows * dim].iter().map(|&v| v as f64).collect();
            let (r, d, back) = decode(&encode(rows, dim, &vals).unwrap()).unwrap();
            prop_assert_eq!((r, d), (rows, dim));
            prop_assert_eq!(back, vals);
        }
    }
}
