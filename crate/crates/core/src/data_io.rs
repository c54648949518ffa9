//! Dense matrix files.
//!
//! Two formats are accepted. Text files hold one matrix row per line with
//! whitespace- or comma-separated numbers; `#` starts a comment. Binary files
//! start with the magic `BFWD`, then a little-endian `u32` rank, one `u64` per
//! dimension, and the row-major `f64` payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::point::DensePoint;

const MAGIC: &[u8; 4] = b"BFWD";

/// Reads a matrix. A single-line text file yields a `1 x n` matrix.
pub fn read_matrix(path: &Path) -> Result<DensePoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = if bytes.starts_with(MAGIC) {
        parse_binary(&bytes).map_err(|e| Error::io(path, e))?
    } else {
        let text = String::from_utf8(bytes).map_err(|e| Error::io(path, e))?;
        parse_text(&text).map_err(|e| Error::io(path, e))?
    };
    if m.shape().len() == 1 {
        let n = m.len();
        return Ok(DensePoint::matrix(1, n, m.data().to_vec()));
    }
    Ok(m)
}

/// Reads every entry of a file in row-major order, ignoring its shape.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    read_matrix(path).map(|m| m.data().to_vec())
}

/// Writes the binary format.
pub fn write_binary(path: &Path, x: &DensePoint) -> Result<()> {
    let mut out = Vec::with_capacity(8 + 8 * x.shape().len() + 8 * x.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(x.shape().len() as u32).to_le_bytes());
    for &d in x.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes the text format with round-trippable numbers.
pub fn write_text(path: &Path, x: &DensePoint) -> Result<()> {
    let cols = if x.shape().len() == 2 {
        x.cols()
    } else {
        x.len()
    };
    let mut s = String::new();
    for row in x.data().chunks(cols.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn parse_text(text: &str) -> std::result::Result<DensePoint, String> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("");
        let row: Vec<f64> = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| format!("line {}: bad number `{s}`", i + 1))
            })
            .collect::<std::result::Result<_, _>>()?;
        if row.is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(format!(
                    "line {}: expected {c} columns, found {}",
                    i + 1,
                    row.len()
                ))
            }
            _ => {}
        }
        rows += 1;
        data.extend(row);
    }
    let cols = cols.ok_or("no numbers found")?;
    Ok(DensePoint::matrix(rows, cols, data))
}

fn parse_binary(bytes: &[u8]) -> std::result::Result<DensePoint, String> {
    let mut pos = MAGIC.len();
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        let s = bytes.get(pos..pos + n).ok_or("truncated binary file")?;
        pos += n;
        Ok(s)
    };
    let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if rank == 0 || rank > 2 {
        return Err(format!("unsupported rank {rank}"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
    }
    let len: usize = shape.iter().product();
    let data: Vec<f64> = take(8 * len)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if take(1).is_ok() {
        return Err("trailing bytes after payload".into());
    }
    Ok(if rank == 1 {
        DensePoint::vector(data)
    } else {
        DensePoint::matrix(shape[0], shape[1], data)
    })
}
