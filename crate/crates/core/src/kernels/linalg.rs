use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::eigen::{sym_eigen, sym_eigenvalues, EigenDecomp};
use super::GramMatrix;
use crate::error::{Error, Result};

/// Largest condition number accepted for an unregularized inverse.
pub const MAX_CONDITION: f64 = 1e12;

/// The fallback ridge `1e-8 * Tr(G) / N`.
pub fn default_ridge(g: &GramMatrix) -> f64 {
    1e-8 * g.trace() / g.n() as f64
}

/// Solves against `G + eps I` for a fixed Gram matrix.
///
/// The factorization is a Cholesky decomposition, with a full
/// eigendecomposition as the fallback when roundoff makes it fail. Picking the
/// ridge automatically only needs the eigenvalues.
#[derive(Clone, Debug)]
pub struct RegularizedSolver {
    eps: f64,
    factor: Factor,
    /// Smallest eigenvalue of `G`, when it was computed.
    min_eigenvalue: Option<f64>,
}

#[derive(Clone, Debug)]
enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Eigen {
        eig: EigenDecomp,
        inv_values: DVector<f64>,
    },
}

impl RegularizedSolver {
    /// `ridge = None` picks the exact inverse when `G` is well conditioned
    /// and falls back to [`default_ridge`] otherwise. `Some(0.0)` demands the
    /// exact inverse and fails on an ill-conditioned `G`.
    pub fn new(g: &GramMatrix, ridge: Option<f64>) -> Result<Self> {
        match ridge {
            Some(eps) if !(eps >= 0.0 && eps.is_finite()) => Err(Error::InvalidParameter(format!(
                "ridge must be a nonnegative finite number, got {eps}"
            ))),
            Some(eps) if eps > 0.0 => Self::factorize(g, eps, None),
            Some(_) => {
                let values = sym_eigenvalues(g.matrix())?;
                let cond = condition(&values);
                if cond < MAX_CONDITION {
                    Self::factorize(g, 0.0, Some(values.min()))
                } else {
                    Err(Error::Singular(cond))
                }
            }
            None => {
                let values = sym_eigenvalues(g.matrix())?;
                let eps = if condition(&values) < MAX_CONDITION {
                    0.0
                } else {
                    default_ridge(g)
                };
                Self::factorize(g, eps, Some(values.min()))
            }
        }
    }

    fn factorize(g: &GramMatrix, eps: f64, min_eigenvalue: Option<f64>) -> Result<Self> {
        match Cholesky::new(shifted(g.matrix(), eps)) {
            Some(ch) => Ok(Self {
                eps,
                factor: Factor::Cholesky(ch),
                min_eigenvalue,
            }),
            // Indefinite beyond roundoff; let the spectrum decide.
            None => Self::from_eigen(sym_eigen(g.matrix())?, eps),
        }
    }

    fn from_eigen(eig: EigenDecomp, eps: f64) -> Result<Self> {
        let shifted_values = eig.values.map(|l| l + eps);
        let min = shifted_values.min();
        if !(min > 0.0) {
            let max = shifted_values.max().abs();
            return Err(Error::Singular(if min == 0.0 {
                f64::INFINITY
            } else {
                max / min.abs()
            }));
        }
        Ok(Self {
            eps,
            min_eigenvalue: Some(eig.values.min()),
            factor: Factor::Eigen {
                inv_values: shifted_values.map(|l| 1.0 / l),
                eig,
            },
        })
    }

    /// The ridge actually applied.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        match &self.factor {
            Factor::Cholesky(ch) => ch.l_dirty().nrows(),
            Factor::Eigen { eig, .. } => eig.dim(),
        }
    }

    /// `(G + eps I)^{-1} rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Cholesky(ch) => ch.solve(rhs),
            Factor::Eigen { eig, inv_values } => {
                let mut proj = eig.vectors.tr_mul(rhs);
                for (mut row, s) in proj.row_iter_mut().zip(inv_values.iter()) {
                    row *= *s;
                }
                &eig.vectors * proj
            }
        }
    }

    /// `(G + eps I)^{-1}`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = match &self.factor {
            Factor::Cholesky(ch) => ch.inverse(),
            Factor::Eigen { eig, .. } => {
                let eps = self.eps;
                eig.reconstruct_with(|l| 1.0 / (l + eps))
            }
        };
        symmetrize(inv)
    }

    /// Operator 2-norm of `(G + eps I)^{-1}`.
    pub fn inverse_norm(&self) -> Result<f64> {
        match self.min_eigenvalue {
            Some(min) => Ok(1.0 / (min + self.eps)),
            None => {
                let values = sym_eigenvalues(&self.inverse())?;
                Ok(values[0])
            }
        }
    }
}

fn condition(values: &DVector<f64>) -> f64 {
    let max = values.max();
    let min = values.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

fn shifted(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += eps;
    }
    out
}

pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `(G + eps I)^{-1}`. With `eps = 0`, `G` must have condition number below
/// [`MAX_CONDITION`].
pub fn reg_inverse(g: &GramMatrix, eps: f64) -> Result<DMatrix<f64>> {
    Ok(RegularizedSolver::new(g, Some(eps))?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> GramMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        GramMatrix::new(symmetrize(
            &a * a.transpose() + DMatrix::identity(n, n) * 0.1,
        ))
        .unwrap()
    }

    #[test]
    fn examples() {
        let id = GramMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(reg_inverse(&id, 0.0).unwrap(), DMatrix::identity(3, 3));

        let d =
            GramMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]))).unwrap();
        let inv = reg_inverse(&d, 0.0).unwrap();
        assert!((inv - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]))).norm() < 1e-15);
    }

    #[test]
    fn product_is_identity() {
        for (seed, eps) in [(1, 0.0), (2, 1e-3), (3, 0.5)] {
            let g = random_spd(5, seed);
            let inv = reg_inverse(&g, eps).unwrap();
            let prod = &inv * shifted(g.matrix(), eps);
            assert!((prod - DMatrix::identity(5, 5)).norm() < 1e-8);
            assert_eq!(inv, inv.transpose());
        }
    }

    #[test]
    fn singular_needs_ridge() {
        let g = GramMatrix::new(DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(matches!(reg_inverse(&g, 0.0), Err(Error::Singular(_))));
        assert!(reg_inverse(&g, 1e-3).is_ok());

        let auto = RegularizedSolver::new(&g, None).unwrap();
        assert_eq!(auto.eps(), default_ridge(&g));
    }

    #[test]
    fn auto_is_exact_when_well_conditioned() {
        let g = random_spd(6, 9);
        let s = RegularizedSolver::new(&g, None).unwrap();
        assert_eq!(s.eps(), 0.0);
        let rhs = DMatrix::from_fn(6, 2, |i, j| (i + 3 * j) as f64);
        let x = s.solve(&rhs);
        assert!((g.matrix() * x - rhs).norm() < 1e-9);
    }

    #[test]
    fn solve_paths_agree() {
        let g = random_spd(7, 4);
        let chol = RegularizedSolver::new(&g, Some(0.01)).unwrap();
        let eig = RegularizedSolver::from_eigen(sym_eigen(g.matrix()).unwrap(), 0.01).unwrap();
        let rhs = DMatrix::from_fn(7, 3, |i, j| ((i * 5 + j) % 4) as f64 - 1.5);
        assert!((chol.solve(&rhs) - eig.solve(&rhs)).norm() < 1e-10);
        assert!((chol.inverse_norm().unwrap() - eig.inverse_norm().unwrap()).abs() < 1e-10);
    }
}
