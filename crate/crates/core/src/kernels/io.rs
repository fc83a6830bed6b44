//! Gram matrix import and export.
//!
//! CSV: a `# n=<N>` comment line followed by `N` rows of `N` comma-separated
//! values. Binary: `IKGM`, `N` as big-endian u32, then `N²` little-endian f64
//! in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::GramMatrix;
use crate::error::{Error, Result};

pub const GRAM_MAGIC: &[u8; 4] = b"IKGM";

pub fn write_gram_csv<W: Write>(g: &GramMatrix, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "# n={}", g.n())?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let m = g.matrix();
    for i in 0..g.n() {
        w.write_record((0..g.n()).map(|j| format!("{:?}", m[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gram_csv<R: Read>(input: R) -> Result<GramMatrix> {
    let mut input = BufReader::new(input);
    let mut header = String::new();
    input.read_line(&mut header)?;
    let n: usize = header
        .trim()
        .trim_start_matches('#')
        .trim()
        .strip_prefix("n=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| {
            Error::Format(format!(
                "expected `# n=<N>` header, got {:?}",
                header.trim()
            ))
        })?;

    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::Format(format!(
                "row {rows} has {} entries, expected {n}",
                rec.len()
            )));
        }
        for field in rec.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {rows}: {e}")))?,
            );
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Format(format!("expected {n} rows, got {rows}")));
    }
    GramMatrix::new(DMatrix::from_row_slice(n, n, &data))
}

pub fn write_gram_binary<W: Write>(g: &GramMatrix, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let n = u32::try_from(g.n()).map_err(|_| Error::Format("matrix too large".into()))?;
    out.write_all(GRAM_MAGIC)?;
    out.write_all(&n.to_be_bytes())?;
    let m = g.matrix();
    for i in 0..g.n() {
        for j in 0..g.n() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_gram_binary<R: Read>(input: R) -> Result<GramMatrix> {
    let mut input = BufReader::new(input);
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic)?;
    if &magic != GRAM_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected IKGM")));
    }
    let mut nb = [0u8; 4];
    read_exact(&mut input, &mut nb)?;
    let n = u32::from_be_bytes(nb) as usize;
    let mut data = vec![0.0; n * n];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        read_exact(&mut input, &mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    if input.read(&mut buf)? != 0 {
        return Err(Error::Format("trailing bytes after Gram matrix".into()));
    }
    GramMatrix::new(DMatrix::from_row_slice(n, n, &data))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated file".into()),
        _ => Error::Io(e),
    })
}

/// Reads a Gram matrix, choosing the format by extension (`.csv` or binary).
pub fn load_gram(path: &Path) -> Result<GramMatrix> {
    let f = File::open(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        read_gram_csv(f)
    } else {
        read_gram_binary(f)
    }
}

pub fn save_gram(g: &GramMatrix, path: &Path) -> Result<()> {
    let f = File::create(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        write_gram_csv(g, f)
    } else {
        write_gram_binary(g, f)
    }
}
