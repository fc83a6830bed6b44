//! Base kernels, Gram and cross matrices, and the dense symmetric linear
//! algebra shared by the rest of the crate.

mod eigen;
pub mod io;
mod linalg;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

pub use eigen::{
    asymmetry, block_sym_eigen, jacobi_eigen, psd_project, sym_eigen, sym_eigenvalues, top_k,
    EigenDecomp, POSITIVE_CUTOFF, SYMMETRY_TOL,
};
pub(crate) use eigen::{psd_from_eigen, truncate};
pub(crate) use linalg::symmetrize;
pub use linalg::{default_ridge, reg_inverse, RegularizedSolver, MAX_CONDITION};

/// A dataset of equal-length feature vectors, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "point dimension must be positive".into(),
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite feature at flat index {bad}"
            )));
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).ok_or(Error::Empty)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            ensure_dim(dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(data, dim)
    }

    /// An empty set of `dim`-dimensional points.
    pub fn empty(dim: usize) -> Self {
        Self {
            data: Vec::new(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        ensure_dim(self.dim, p.len())?;
        self.data.extend_from_slice(p);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Points {
            data,
            dim: self.dim,
        }
    }

    /// Points carrying dataset ids, for use with a precomputed kernel.
    pub fn from_ids(ids: &[u64]) -> Self {
        Self {
            data: ids.iter().map(|&i| i as f64).collect(),
            dim: 1,
        }
    }
}

/// Symmetry tolerance for Gram matrices, relative to `max|entry|`.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-10;

/// Symmetric `N x N` matrix of kernel evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wraps a matrix after checking it is square and symmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare(m.nrows(), m.ncols()));
        }
        if m.nrows() == 0 {
            return Err(Error::Empty);
        }
        let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let asym = asymmetry(&m);
        if !(asym <= GRAM_SYMMETRY_TOL * scale) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Checks the spectrum: `λ_min >= -1e-8 * λ_max`. This costs a full
    /// eigendecomposition.
    pub fn is_psd(&self) -> Result<bool> {
        let eig = sym_eigen(&self.0)?;
        let max = eig.values[0];
        let min = eig.values[eig.dim() - 1];
        Ok(min >= -1e-8 * max.abs().max(f64::MIN_POSITIVE))
    }

    /// Principal submatrix on `indices`.
    pub fn select(&self, indices: &[usize]) -> GramMatrix {
        GramMatrix(self.0.select_rows(indices).select_columns(indices))
    }

    pub fn scaled(&self, c: f64) -> GramMatrix {
        GramMatrix(&self.0 * c)
    }
}

/// Rectangular `N x M` kernel matrix linking two datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossMatrix(DMatrix<f64>);

impl CrossMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite cross-kernel entry".into(),
            ));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> CrossMatrix {
        CrossMatrix(self.0.select_rows(rows))
    }
}

impl From<GramMatrix> for CrossMatrix {
    fn from(g: GramMatrix) -> Self {
        CrossMatrix(g.0)
    }
}

/// A Gram matrix over externally identified points.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedKernel {
    gram: GramMatrix,
    ids: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl PrecomputedKernel {
    /// Row `i` of `gram` belongs to the point with id `ids[i]`.
    pub fn new(gram: GramMatrix, ids: Vec<u64>) -> Result<Self> {
        ensure_dim(gram.n(), ids.len())?;
        let mut index = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate id {id}")));
            }
        }
        Ok(Self { gram, ids, index })
    }

    /// Ids `0..n` in row order.
    pub fn with_row_ids(gram: GramMatrix) -> Self {
        let ids = (0..gram.n() as u64).collect();
        Self::new(gram, ids).expect("row ids are unique")
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    fn lookup(&self, p: &[f64]) -> Result<usize> {
        ensure_dim(1, p.len())?;
        let v = p[0];
        if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
            return Err(Error::UnknownIndex(v as u64));
        }
        let id = v as u64;
        self.index.get(&id).copied().ok_or(Error::UnknownIndex(id))
    }
}

/// A base kernel `k(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    /// `exp(-|x - y|² / (2 σ²))`
    Rbf {
        sigma: f64,
    },
    /// `xᵀy`
    Linear,
    /// `(xᵀy + coef)^degree`
    Polynomial {
        degree: u32,
        coef: f64,
    },
    Precomputed(Arc<PrecomputedKernel>),
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Rbf { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("RBF sigma must be positive, got {sigma}")),
            ),
            KernelSpec::Polynomial { degree: 0, .. } => Err(Error::InvalidParameter(
                "polynomial degree must be at least 1".into(),
            )),
            KernelSpec::Polynomial { coef, .. } if !coef.is_finite() => Err(
                Error::InvalidParameter("polynomial coefficient must be finite".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Whether `k(x, x) = 1` for every `x`.
    pub fn is_normalized(&self) -> bool {
        match self {
            KernelSpec::Rbf { .. } => true,
            KernelSpec::Precomputed(p) => {
                p.gram.0.diagonal().iter().all(|d| (d - 1.0).abs() < 1e-12)
            }
            _ => false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Precomputed(_) => "precomputed",
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Evaluates `k(x, y)`.
pub fn eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    match spec {
        KernelSpec::Precomputed(p) => {
            let i = p.lookup(x)?;
            let j = p.lookup(y)?;
            Ok(p.gram.0[(i, j)])
        }
        _ => {
            ensure_dim(x.len(), y.len())?;
            Ok(eval_unchecked(spec, x, y))
        }
    }
}

fn eval_unchecked(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match spec {
        KernelSpec::Rbf { sigma } => (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp(),
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Polynomial { degree, coef } => (dot(x, y) + coef).powi(*degree as i32),
        KernelSpec::Precomputed(_) => unreachable!("precomputed kernels go through lookup"),
    }
}

/// Gram matrix `K_ij = k(x_i, x_j)`.
pub fn gram(spec: &KernelSpec, xs: &Points) -> Result<GramMatrix> {
    if xs.is_empty() {
        return Err(Error::Empty);
    }
    let m = cross_matrix(spec, xs, xs, true)?;
    Ok(GramMatrix(m))
}

/// Cross matrix `C_ij = k(x_i, y_j)`.
pub fn cross(spec: &KernelSpec, xs: &Points, ys: &Points) -> Result<CrossMatrix> {
    Ok(CrossMatrix(cross_matrix(spec, xs, ys, false)?))
}

fn cross_matrix(
    spec: &KernelSpec,
    xs: &Points,
    ys: &Points,
    symmetric: bool,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    ensure_dim(xs.dim(), ys.dim())?;
    let (n, m) = (xs.len(), ys.len());
    if let KernelSpec::Precomputed(p) = spec {
        let rows: Vec<usize> = xs.iter().map(|x| p.lookup(x)).collect::<Result<_>>()?;
        let cols: Vec<usize> = ys.iter().map(|y| p.lookup(y)).collect::<Result<_>>()?;
        return Ok(DMatrix::from_fn(n, m, |i, j| p.gram.0[(rows[i], cols[j])]));
    }
    // Column-major: fill one column (one y) per task.
    let mut out = DMatrix::<f64>::zeros(n, m);
    out.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(j, col)| {
            let y = ys.row(j);
            let upto = if symmetric { j + 1 } else { n };
            for (i, c) in col.iter_mut().enumerate().take(upto) {
                *c = eval_unchecked(spec, xs.row(i), y);
            }
        });
    if symmetric {
        for j in 0..m {
            for i in (j + 1)..n {
                out[(i, j)] = out[(j, i)];
            }
        }
    }
    Ok(out)
}
