//! Basis file layout:
//!
//! ```text
//! rb-basis v1 <N> <m> <Q>\n
//! u64 R            number of projected rhs terms
//! u64 F            fingerprint length
//! u64 S            number of stored singular values
//! F  x f64         fingerprint (grid and configuration)
//! N*m x f64        Z, row-major
//! S  x f64         snapshot singular values, decreasing
//! Q*m*m x f64      projected operators Z^T A_q Z, each row-major
//! R*m x f64        projected rhs terms Z^T b_r
//! ```
//!
//! All binary values are little-endian.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::ReducedBasis;
use crate::error::{Error, Result};
use crate::pde::ChannelModel;

const MAGIC: &str = "rb-basis v1";

fn put_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

pub fn save_basis(rb: &ReducedBasis, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let (n, m, q) = (rb.full_dim(), rb.size(), rb.operators.len());
    writeln!(w, "{MAGIC} {n} {m} {q}").map_err(io)?;
    for len in [rb.rhs.len(), rb.fingerprint.len(), rb.singular_values.len()] {
        w.write_all(&(len as u64).to_le_bytes()).map_err(io)?;
    }
    put_f64s(&mut w, rb.fingerprint.iter().copied()).map_err(io)?;
    put_f64s(&mut w, row_major(&rb.z)).map_err(io)?;
    put_f64s(&mut w, rb.singular_values.iter().copied()).map_err(io)?;
    for a in &rb.operators {
        put_f64s(&mut w, row_major(a)).map_err(io)?;
    }
    for b in &rb.rhs {
        put_f64s(&mut w, b.iter().copied()).map_err(io)?;
    }
    w.flush().map_err(io)
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated file".into()))?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count)
            .map(|_| self.u64().map(f64::from_bits))
            .collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(rows, cols, &self.f64s(rows * cols)?))
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let rest = line
        .trim_end()
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format(format!("missing `{MAGIC}` header")))?;
    let dims: Vec<usize> = rest
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("bad header line `{}`", line.trim_end())))?;
    match dims[..] {
        [n, m, q] => Ok((n, m, q)),
        _ => Err(Error::Format(format!("bad header line `{}`", line.trim_end()))),
    }
}

/// Reads a basis and checks that it was built for `model`'s grid and
/// configuration.
pub fn load_basis(path: &Path, model: &ChannelModel) -> Result<ReducedBasis> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut inner = BufReader::new(file);
    let mut line = String::new();
    inner
        .read_line(&mut line)
        .map_err(|_| Error::Format("unreadable header".into()))?;
    let (n, m, q) = parse_header(&line)?;
    let mut r = Reader { inner };
    let n_rhs = r.u64()? as usize;
    let n_fp = r.u64()? as usize;
    let n_sv = r.u64()? as usize;
    if n_fp > 1024 || n_rhs > 1024 || n_sv > n.max(1) * 1024 || q > 1024 {
        return Err(Error::Format("implausible section lengths".into()));
    }
    let fingerprint = r.f64s(n_fp)?;
    if fingerprint != model.fingerprint() {
        return Err(Error::config(
            "basis",
            format!(
                "{} was built for a different grid or configuration",
                path.display()
            ),
        ));
    }
    if n != model.grid().unknowns() || q != model.terms().operators().len() {
        return Err(Error::Format("dimensions do not match the model".into()));
    }
    let z = r.matrix(n, m)?;
    let singular_values = r.f64s(n_sv)?;
    let operators = (0..q).map(|_| r.matrix(m, m)).collect::<Result<_>>()?;
    let rhs = (0..n_rhs)
        .map(|_| r.f64s(m).map(DVector::from_vec))
        .collect::<Result<_>>()?;
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format("trailing bytes after the rhs section".into()));
    }
    Ok(ReducedBasis {
        z,
        singular_values,
        operators,
        rhs,
        fingerprint,
    })
}
