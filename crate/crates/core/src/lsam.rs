//! The "LSAM v1" matrix container: a tiny binary format used to persist
//! dictionaries, codes, and encoder parameters.
//!
//! Layout: bytes 0–3 ASCII magic `LSAM`; bytes 4–7 little-endian u32 version
//! (must be 1); bytes 8–15 little-endian u64 row count; bytes 16–23
//! little-endian u64 column count; then `rows * cols` row-major little-endian
//! IEEE-754 f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LSAM";
const VERSION: u32 = 1;

/// Write a matrix to an LSAM byte stream.
pub fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for row in m.rows() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a matrix from an LSAM byte stream.
pub fn read_matrix<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::FormatError(format!(
            "bad LSAM magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut word = [0u8; 4];
    read_exact(r, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::FormatError(format!(
            "unsupported LSAM version {version}"
        )));
    }
    let mut long = [0u8; 8];
    read_exact(r, &mut long, "row count")?;
    let rows = u64::from_le_bytes(long) as usize;
    read_exact(r, &mut long, "column count")?;
    let cols = u64::from_le_bytes(long) as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| {
        Error::FormatError(format!("LSAM dimensions {rows}x{cols} overflow"))
    })?;
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut buf, "payload")?;
        data.push(f64::from_le_bytes(buf));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::FormatError(format!("LSAM shape: {e}")))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::FormatError(format!("truncated LSAM file while reading {what}: {e}")))
}

pub fn save_matrix<P: AsRef<Path>>(path: P, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix<P: AsRef<Path>>(path: P) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let m = read_matrix(&mut r)?;
    // trailing garbage means the file is not a plain LSAM container
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(m),
        _ => Err(Error::FormatError("trailing bytes after LSAM payload".into())),
    }
}

/// Store a vector as an `n x 1` LSAM matrix.
pub fn save_vector<P: AsRef<Path>>(path: P, v: &Array1<f64>) -> Result<()> {
    let m = Array2::from_shape_vec((v.len(), 1), v.to_vec())
        .map_err(|e| Error::FormatError(e.to_string()))?;
    save_matrix(path, &m)
}

/// Load an `n x 1` (or `1 x n`) LSAM matrix as a vector.
pub fn load_vector<P: AsRef<Path>>(path: P) -> Result<Array1<f64>> {
    let m = load_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).to_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).to_owned())
    } else {
        Err(Error::ShapeMismatch(format!(
            "expected a vector-shaped LSAM file, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}
