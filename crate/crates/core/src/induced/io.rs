//! Binary container for fitted induced kernels.
//!
//! Layout (integers little-endian unless noted):
//!
//! ```text
//! "IKSL" | version u16 | kernel tag u8 | kernel params
//! N u64 | K u64 | point dim u64 | ridge f64 | K target eigenvalues f64
//! B (N x N, row-major f64) | M (K x N, row-major f64) | points (N x dim f64)
//! ```
//!
//! Kernel params: RBF `sigma f64`; linear none; polynomial `degree u32,
//! coef f64`; precomputed `n u64, n ids u64, n x n Gram f64`.
//! The `SslConfig` goes to a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{InducedKernel, InducedSolution, SslConfig};
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec, Points, PrecomputedKernel};

pub const INDUCED_MAGIC: &[u8; 4] = b"IKSL";
pub const INDUCED_VERSION: u16 = 1;

const TAG_RBF: u8 = 0;
const TAG_LINEAR: u8 = 1;
const TAG_POLY: u8 = 2;
const TAG_PRECOMPUTED: u8 = 3;

struct Out<W: Write>(W);

impl<W: Write> Out<W> {
    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.0.write_all(b)?;
        Ok(())
    }
    fn u64(&mut self, v: usize) -> Result<()> {
        self.bytes(&(v as u64).to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn row_major(&mut self, m: &DMatrix<f64>) -> Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)])?;
            }
        }
        Ok(())
    }
}

struct In<R: Read>(R);

impl<R: Read> In<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::Format("truncated induced-kernel file".into())
            }
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes()?);
        // Guards allocations against corrupt headers.
        usize::try_from(v)
            .ok()
            .filter(|&v| v <= 1 << 32)
            .ok_or_else(|| Error::Format(format!("implausible size {v}")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn vec(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| self.f64()).collect()
    }
    fn row_major(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let data = self.vec(rows * cols)?;
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

pub fn write_induced<W: Write, J: Write>(ik: &InducedKernel, bin: W, json: J) -> Result<()> {
    let mut out = Out(BufWriter::new(bin));
    out.bytes(INDUCED_MAGIC)?;
    out.bytes(&INDUCED_VERSION.to_le_bytes())?;
    match ik.base() {
        KernelSpec::Rbf { sigma } => {
            out.bytes(&[TAG_RBF])?;
            out.f64(*sigma)?;
        }
        KernelSpec::Linear => out.bytes(&[TAG_LINEAR])?,
        KernelSpec::Polynomial { degree, coef } => {
            out.bytes(&[TAG_POLY])?;
            out.bytes(&degree.to_le_bytes())?;
            out.f64(*coef)?;
        }
        KernelSpec::Precomputed(p) => {
            out.bytes(&[TAG_PRECOMPUTED])?;
            out.u64(p.ids().len())?;
            for &id in p.ids() {
                out.bytes(&id.to_le_bytes())?;
            }
            out.row_major(p.gram().matrix())?;
        }
    }
    let sol = ik.solution();
    let points = ik.points();
    out.u64(sol.n())?;
    out.u64(sol.rep_dim())?;
    out.u64(points.dim())?;
    out.f64(sol.ridge)?;
    for &v in sol.target_values.iter() {
        out.f64(v)?;
    }
    out.row_major(&sol.b)?;
    out.row_major(&sol.m)?;
    for &v in points.as_slice() {
        out.f64(v)?;
    }
    out.0.flush()?;

    let mut json = BufWriter::new(json);
    serde_json::to_writer_pretty(&mut json, ik.config())?;
    json.write_all(b"\n")?;
    json.flush()?;
    Ok(())
}

pub fn read_induced<R: Read, J: Read>(bin: R, json: J) -> Result<InducedKernel> {
    let mut inp = In(BufReader::new(bin));
    let magic: [u8; 4] = inp.bytes()?;
    if &magic != INDUCED_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected IKSL")));
    }
    let version = u16::from_le_bytes(inp.bytes()?);
    if version != INDUCED_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let [tag] = inp.bytes::<1>()?;
    let base = match tag {
        TAG_RBF => KernelSpec::Rbf { sigma: inp.f64()? },
        TAG_LINEAR => KernelSpec::Linear,
        TAG_POLY => {
            let degree = u32::from_le_bytes(inp.bytes()?);
            KernelSpec::Polynomial {
                degree,
                coef: inp.f64()?,
            }
        }
        TAG_PRECOMPUTED => {
            let n = inp.u64()?;
            let ids = (0..n)
                .map(|_| inp.bytes().map(u64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            let g = GramMatrix::new(inp.row_major(n, n)?)?;
            KernelSpec::Precomputed(Arc::new(PrecomputedKernel::new(g, ids)?))
        }
        other => return Err(Error::Format(format!("unknown kernel tag {other}"))),
    };
    let n = inp.u64()?;
    let k = inp.u64()?;
    let dim = inp.u64()?;
    let ridge = inp.f64()?;
    let target_values = DVector::from_vec(inp.vec(k)?);
    let b = inp.row_major(n, n)?;
    let m = inp.row_major(k, n)?;
    let points = Points::new(inp.vec(n * dim)?, dim)?;
    let mut rest = [0u8; 1];
    if inp.0.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after induced kernel".into()));
    }

    let config: SslConfig = serde_json::from_reader(BufReader::new(json))?;
    config.validate()?;
    let solution = InducedSolution {
        b,
        m,
        target_values,
        ridge,
    };
    InducedKernel::new(base, points, solution, config)
}

/// Sidecar path: `path` with its extension replaced by `json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

impl InducedKernel {
    /// Writes the binary container to `path` and the config next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let sidecar = sidecar_path(path);
        if sidecar == path {
            return Err(Error::InvalidParameter(
                "induced-kernel path must not end in .json".into(),
            ));
        }
        write_induced(self, File::create(path)?, File::create(sidecar)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_induced(File::open(path)?, File::open(sidecar_path(path))?)
    }
}
