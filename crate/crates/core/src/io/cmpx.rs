//! CMPX: a minimal little-endian container for complex matrices.
//!
//! Layout: `b"CMPX"`, format version (`u32`), rows (`u64`), cols (`u64`), then
//! `rows * cols` entries in row-major order, each stored as `re`, `im` `f64`.

use std::path::Path;

use num_complex::Complex64;

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::matrix::CMatrix;

pub const MAGIC: &[u8; 4] = b"CMPX";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

pub fn encode(m: &CMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().expect("8-byte slice"))
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8-byte slice"))
}

/// Parses a CMPX image; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<CMatrix> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(malformed(&format!("{} bytes is shorter than the {HEADER_LEN}-byte header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice"));
    if version != VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            expected: VERSION,
            found: version,
        });
    }
    let rows = le_u64(&bytes[8..16]);
    let cols = le_u64(&bytes[16..24]);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(16))
        .ok_or_else(|| malformed("rows * cols overflows"))?;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(malformed(&format!("{} trailing bytes after the payload", found - expected)));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| Complex64::new(le_f64(&c[0..8]), le_f64(&c[8..16])))
        .collect();
    CMatrix::from_vec(rows as usize, cols as usize, data)
}

/// Atomically writes `m`; returns the SHA-256 of the bytes written.
pub fn save_matrix(path: &Path, m: &CMatrix) -> Result<String> {
    let bytes = encode(m);
    write_atomic(path, &bytes)?;
    Ok(super::sha256_hex(&bytes))
}

pub fn load_matrix(path: &Path) -> Result<CMatrix> {
    decode(&read_file(path)?, path)
}

/// Stores a vector as a single column.
pub fn save_vector(path: &Path, v: &[Complex64]) -> Result<String> {
    save_matrix(path, &CMatrix::column(v))
}

/// Loads a single-row or single-column file as a vector.
pub fn load_vector(path: &Path) -> Result<Vec<Complex64>> {
    let m = load_matrix(path)?;
    if m.rows() != 1 && m.cols() != 1 && !m.as_slice().is_empty() {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected a vector, found a {}x{} matrix", m.rows(), m.cols()),
        });
    }
    Ok(m.into_vec())
}

/// Stores samples as the rows of one matrix.
pub fn save_rows(path: &Path, rows: &[Vec<Complex64>]) -> Result<String> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            context: "save_rows",
            expected: cols,
            found: bad.len(),
        });
    }
    let data = rows.iter().flatten().copied().collect();
    save_matrix(path, &CMatrix::from_vec(rows.len(), cols, data)?)
}

pub fn load_rows(path: &Path) -> Result<Vec<Vec<Complex64>>> {
    let m = load_matrix(path)?;
    Ok(m.row_vectors().map(<[Complex64]>::to_vec).collect())
}

/// Real vectors stored with zero imaginary parts.
pub fn save_real_rows(path: &Path, rows: &[Vec<f64>]) -> Result<String> {
    let complex: Vec<Vec<Complex64>> = rows.iter().map(|r| crate::matrix::to_complex(r)).collect();
    save_rows(path, &complex)
}
