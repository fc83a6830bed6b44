//! Dense symmetric eigendecomposition.
//!
//! The production path reduces the matrix to tridiagonal form with Householder
//! reflections and then runs implicit QL with Wilkinson-style shifts on the
//! tridiagonal (the classic `tred2`/`tql2` pair, rewritten for column-major
//! storage so every inner loop walks a contiguous column). A cyclic Jacobi
//! solver is kept alongside; it is slower but shares no code with the QL path,
//! which makes it a useful cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetry tolerance for eigensolver inputs, relative to `max(1, max|m_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Eigenvalues at or below this fraction of `max|λ|` count as non-positive.
pub const POSITIVE_CUTOFF: f64 = 1e-10;

/// Full eigendecomposition `M = C diag(D) Cᵀ`, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `C diag(f(D)) Cᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = scale_columns(&self.vectors, |j| f(self.values[j]));
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.reconstruct_with(|v| v)
    }

    /// Threshold below which an eigenvalue is treated as non-positive.
    pub fn positive_threshold(&self) -> f64 {
        let max_abs = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        POSITIVE_CUTOFF * max_abs
    }

    /// Number of eigenvalues above [`Self::positive_threshold`].
    pub fn positive_count(&self) -> usize {
        let thr = self.positive_threshold();
        self.values.iter().filter(|&&v| v > thr).count()
    }
}

/// Largest absolute asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare(m.nrows(), m.ncols()));
    }
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let asym = asymmetry(m);
    if asym > rel_tol * scale || asym.is_nan() {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn scale_columns(m: &DMatrix<f64>, f: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= f(j);
    }
    out
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
///
/// Ties keep the order in which the QL sweep produced them.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<EigenDecomp> {
    check_symmetric(m, SYMMETRY_TOL)?;
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Empty);
    }
    // Average the two triangles so roundoff asymmetry does not leak in.
    let sym = (m + m.transpose()) * 0.5;
    let mut tri = tridiagonalize(sym, true);
    tql2(&mut tri.diag, &mut tri.off, &mut tri.q)?;
    Ok(sorted(tri.diag, tri.q))
}

/// Eigenvalues only, in descending order. Skips the eigenvector work, which
/// dominates [`sym_eigen`] on large inputs.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_symmetric(m, SYMMETRY_TOL)?;
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut tri = tridiagonalize(sym, false);
    tql2(&mut tri.diag, &mut tri.off, &mut tri.q)?;
    let mut values: Vec<f64> = tri.diag.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(values))
}

/// Eigendecomposition of a matrix that is block diagonal after permutation.
///
/// `blocks` must partition `0..n`, and entries linking different blocks are
/// assumed to be zero. Each block is decomposed on its own and the pairs are
/// merged in descending order.
pub fn block_sym_eigen(m: &DMatrix<f64>, blocks: &[Vec<usize>]) -> Result<EigenDecomp> {
    check_symmetric(m, SYMMETRY_TOL)?;
    let n = m.nrows();
    if blocks.len() <= 1 {
        return sym_eigen(m);
    }
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    let mut col = 0;
    for block in blocks {
        let sub = m.select_rows(block).select_columns(block);
        let eig = sym_eigen(&sub)?;
        for k in 0..block.len() {
            values[col] = eig.values[k];
            for (r, &i) in block.iter().enumerate() {
                vectors[(i, col)] = eig.vectors[(r, k)];
            }
            col += 1;
        }
    }
    if col != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: col,
        });
    }
    Ok(sorted(values, vectors))
}

/// Cyclic Jacobi eigendecomposition, intended for small matrices and tests.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> Result<EigenDecomp> {
    check_symmetric(m, SYMMETRY_TOL)?;
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        // Roundoff leaves off-diagonal mass of order (n eps)² |A|².
        let floor = n as f64 * f64::EPSILON;
        if off <= floor * floor * total || off == 0.0 {
            let values = DVector::from_iterator(n, (0..n).map(|i| a[(i, i)]));
            return Ok(sorted(values, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}

fn sorted(values: DVector<f64>, vectors: DMatrix<f64>) -> EigenDecomp {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal eigenvalues keep solver order.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut vecs = DMatrix::<f64>::zeros(vectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &vectors.column(src));
    }
    EigenDecomp {
        vectors: vecs,
        values: vals,
    }
}

struct Tridiagonal {
    diag: DVector<f64>,
    /// `off[k]` couples rows `k` and `k + 1`; the last entry is zero.
    off: DVector<f64>,
    q: DMatrix<f64>,
}

/// Householder reduction `A = Q T Qᵀ`. Works on full symmetric storage.
/// Without `accumulate`, `q` is left with zero rows.
fn tridiagonalize(mut a: DMatrix<f64>, accumulate: bool) -> Tridiagonal {
    let n = a.nrows();
    let mut diag = DVector::<f64>::zeros(n);
    let mut off = DVector::<f64>::zeros(n);
    let mut betas = vec![0.0_f64; n];
    let mut p = vec![0.0_f64; n];
    let data = a.as_mut_slice();

    for k in 0..n.saturating_sub(2) {
        diag[k] = data[k + k * n];
        let start = k + 1;
        let m = n - start;
        let col = &mut data[k * n + start..k * n + n];
        let x0 = col[0];
        // Scaling keeps tiny columns (rank-deficient inputs) from underflowing.
        let scale = col[1..].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            off[k] = x0;
            betas[k] = 0.0;
            continue;
        }
        let scale = scale.max(x0.abs());
        col.iter_mut().for_each(|v| *v /= scale);
        let xs = col[0];
        let sigma = col[1..].iter().map(|v| v * v).sum::<f64>();
        let norm = (xs * xs + sigma).sqrt();
        let alpha = if xs <= 0.0 { norm } else { -norm };
        let v0 = xs - alpha;
        let beta = 2.0 / (v0 * v0 + sigma);
        off[k] = alpha * scale;
        betas[k] = beta;
        col[0] = v0;

        // Split borrow: column k holds v, trailing block is columns start..n.
        let (head, tail) = data.split_at_mut(start * n);
        let v = &head[k * n + start..k * n + n];

        // p = beta * S v
        let p = &mut p[..m];
        p.iter_mut().for_each(|x| *x = 0.0);
        for (j, &vj) in v.iter().enumerate() {
            let col = &tail[j * n + start..j * n + n];
            let s = beta * vj;
            for (pi, &cij) in p.iter_mut().zip(col) {
                *pi += s * cij;
            }
        }
        let kappa = 0.5 * beta * p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        for (pi, &vi) in p.iter_mut().zip(v) {
            *pi -= kappa * vi;
        }
        // S -= v wᵀ + w vᵀ with w = p
        for j in 0..m {
            let wj = p[j];
            let vj = v[j];
            let col = &mut tail[j * n + start..j * n + n];
            for ((c, &vi), &wi) in col.iter_mut().zip(v).zip(p.iter()) {
                *c -= vi * wj + wi * vj;
            }
        }
    }
    if n >= 2 {
        diag[n - 2] = data[(n - 2) + (n - 2) * n];
        off[n - 2] = data[(n - 1) + (n - 2) * n];
    }
    diag[n - 1] = data[(n - 1) + (n - 1) * n];
    if !accumulate {
        return Tridiagonal {
            diag,
            off,
            q: DMatrix::zeros(0, n),
        };
    }

    // Q = H_0 H_1 ... H_{n-3}, accumulated back to front.
    let mut q = DMatrix::<f64>::identity(n, n);
    let qd = q.as_mut_slice();
    for k in (0..n.saturating_sub(2)).rev() {
        let beta = betas[k];
        if beta == 0.0 {
            continue;
        }
        let start = k + 1;
        let v = &data[k * n + start..k * n + n];
        for j in start..n {
            let col = &mut qd[j * n + start..j * n + n];
            let s = beta * col.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            if s != 0.0 {
                for (c, &vi) in col.iter_mut().zip(v) {
                    *c -= s * vi;
                }
            }
        }
    }
    Tridiagonal { diag, off, q }
}

/// Implicit QL on a symmetric tridiagonal, rotating the columns of `z`.
fn tql2(d: &mut DVector<f64>, e: &mut DVector<f64>, z: &mut DMatrix<f64>) -> Result<()> {
    let n = d.len();
    let rows = z.nrows();
    const MAX_ITER_PER_VALUE: usize = 60;
    let eps = f64::EPSILON;
    let zd = z.as_mut_slice();
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITER_PER_VALUE {
                    return Err(Error::NoConvergence(MAX_ITER_PER_VALUE));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (left, right) = zd.split_at_mut((i + 1) * rows);
                    let zi = &mut left[i * rows..];
                    let zi1 = &mut right[..rows];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let hb = *b;
                        *b = s * *a + c * hb;
                        *a = c * *a - s * hb;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Projection onto the eigenspace of strictly positive eigenvalues.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(m)?;
    Ok(psd_from_eigen(&eig))
}

pub(crate) fn psd_from_eigen(eig: &EigenDecomp) -> DMatrix<f64> {
    let thr = eig.positive_threshold();
    eig.reconstruct_with(|v| if v > thr { v } else { 0.0 })
}

/// Top-`k` eigenpairs with non-positive eigenvalues clamped to zero.
pub fn top_k(m: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = m.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("rank {k} outside 1..={n}")));
    }
    let eig = sym_eigen(m)?;
    Ok(truncate(&eig, k))
}

pub(crate) fn truncate(eig: &EigenDecomp, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let thr = eig.positive_threshold();
    let vecs = eig.vectors.columns(0, k).into_owned();
    let vals = DVector::from_iterator(
        k,
        eig.values
            .iter()
            .take(k)
            .map(|&v| if v > thr { v } else { 0.0 }),
    );
    (vecs, vals)
}
