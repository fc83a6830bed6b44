//! Closed-form induced kernels for the contrastive and non-contrastive losses.
//!
//! Both losses reduce to matching the representation Gram on the SSL data to
//! a target matrix `T`: `I + A` for the contrastive loss and
//! `I - 11ᵀ/N - (β/2) L` for the non-contrastive one. With `C_K, D_K` the top
//! `K` eigenpairs of `T` (non-positive eigenvalues set to zero), the optimal
//! factor is `M = D_K^{1/2} C_Kᵀ K_ss^{-1}` and the induced kernel is
//! `k*(x, y) = k_{x,s} MᵀM k_{s,y}`.

mod closeness;
mod io;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ensure_dim, Error, Result};
use crate::graph::{laplacian, Adjacency, Laplacian};
use crate::kernels::{
    block_sym_eigen, cross, gram, sym_eigen, truncate, CrossMatrix, EigenDecomp, GramMatrix,
    KernelSpec, Points, RegularizedSolver,
};

pub use closeness::{check_closeness_bound, closeness_radius, ClosenessReport};
pub use io::{read_induced, write_induced, INDUCED_MAGIC, INDUCED_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Contrastive,
    #[serde(alias = "non-contrastive", alias = "vicreg")]
    Noncontrastive,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Contrastive => "contrastive",
            LossKind::Noncontrastive => "noncontrastive",
        })
    }
}

/// Representation dimension `K`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RepDim {
    /// `K = N`.
    #[default]
    Full,
    Fixed(usize),
}

impl RepDim {
    pub fn resolve(self, n: usize) -> Result<usize> {
        match self {
            RepDim::Full => Ok(n),
            RepDim::Fixed(k) if k >= 1 && k <= n => Ok(k),
            RepDim::Fixed(k) => Err(Error::InvalidParameter(format!(
                "representation dimension {k} outside 1..={n}"
            ))),
        }
    }
}

impl fmt::Display for RepDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepDim::Full => f.write_str("full"),
            RepDim::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for RepDim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RepDim::Full => s.serialize_str("full"),
            RepDim::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for RepDim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) => Ok(RepDim::Fixed(k as usize)),
            Raw::Text(t) if t == "full" => Ok(RepDim::Full),
            Raw::Text(t) => t.parse().map(RepDim::Fixed).map_err(|_| {
                serde::de::Error::custom(format!("expected \"full\" or an integer, got {t:?}"))
            }),
        }
    }
}

/// Settings shared by both closed forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub loss: LossKind,
    /// Invariance weight; ignored by the contrastive loss.
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub rep_dim: RepDim,
    /// Ridge added to `K_ss` before inversion. `None` inverts exactly when
    /// the Gram is well conditioned and otherwise uses `1e-8 Tr(K)/N`.
    #[serde(default)]
    pub ridge: Option<f64>,
}

impl SslConfig {
    pub fn contrastive() -> Self {
        Self {
            loss: LossKind::Contrastive,
            beta: 0.0,
            rep_dim: RepDim::Full,
            ridge: None,
        }
    }

    pub fn noncontrastive(beta: f64) -> Self {
        Self {
            loss: LossKind::Noncontrastive,
            beta,
            rep_dim: RepDim::Full,
            ridge: None,
        }
    }

    pub fn with_rep_dim(mut self, k: usize) -> Self {
        self.rep_dim = RepDim::Fixed(k);
        self
    }

    pub fn with_ridge(mut self, eps: f64) -> Self {
        self.ridge = Some(eps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if let Some(eps) = self.ridge {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "ridge must be nonnegative, got {eps}"
                )));
            }
        }
        if self.rep_dim == RepDim::Fixed(0) {
            return Err(Error::InvalidParameter(
                "representation dimension must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Target Gram for the contrastive loss: `I + A`.
pub fn contrastive_target(a: &Adjacency) -> DMatrix<f64> {
    a.with_identity()
}

/// Target Gram for the non-contrastive loss: `I - 11ᵀ/N - (β/2) L`.
pub fn noncontrastive_target(l: &Laplacian, beta: f64) -> DMatrix<f64> {
    let n = l.n();
    let c = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - c - 0.5 * beta * l.matrix()[(i, j)]
    })
}

/// Coefficients of a fitted induced kernel, independent of the input space.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedSolution {
    /// `B = MᵀM`, `N x N`.
    pub b: DMatrix<f64>,
    /// `M`, `K x N`.
    pub m: DMatrix<f64>,
    /// Clamped top-`K` eigenvalues of the target.
    pub target_values: DVector<f64>,
    /// Ridge applied to `K_ss`.
    pub ridge: f64,
}

impl InducedSolution {
    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn rep_dim(&self) -> usize {
        self.m.nrows()
    }

    /// Number of nonzero representation coordinates.
    pub fn rank(&self) -> usize {
        self.target_values.iter().filter(|&&v| v > 0.0).count()
    }

    /// `K B K` for the SSL Gram `K`.
    pub fn induced_gram(&self, g: &GramMatrix) -> DMatrix<f64> {
        let z = self.representations(g);
        &z * z.transpose()
    }

    /// Rows are the representations `M k_{s,x_i}` of the SSL points.
    pub fn representations(&self, g: &GramMatrix) -> DMatrix<f64> {
        (&self.m * g.matrix()).transpose()
    }
}

fn check_square_pair(g: &GramMatrix, n: usize) -> Result<()> {
    ensure_dim(g.n(), n)
}

pub fn fit_noncontrastive(
    g: &GramMatrix,
    l: &Laplacian,
    cfg: &SslConfig,
) -> Result<InducedSolution> {
    cfg.validate()?;
    if cfg.loss != LossKind::Noncontrastive {
        return Err(Error::InvalidParameter(
            "config loss is not noncontrastive".into(),
        ));
    }
    check_square_pair(g, l.n())?;
    let eig = sym_eigen(&noncontrastive_target(l, cfg.beta))?;
    solve_closed_form(g, &eig, cfg)
}

pub fn fit_contrastive(g: &GramMatrix, a: &Adjacency, cfg: &SslConfig) -> Result<InducedSolution> {
    cfg.validate()?;
    if cfg.loss != LossKind::Contrastive {
        return Err(Error::InvalidParameter(
            "config loss is not contrastive".into(),
        ));
    }
    check_square_pair(g, a.n())?;
    // I + A is block diagonal over connected components.
    let eig = block_sym_eigen(&contrastive_target(a), &a.components())?;
    solve_closed_form(g, &eig, cfg)
}

/// Dispatches on `cfg.loss`; the Laplacian is derived from `a` when needed.
pub fn fit(g: &GramMatrix, a: &Adjacency, cfg: &SslConfig) -> Result<InducedSolution> {
    match cfg.loss {
        LossKind::Contrastive => fit_contrastive(g, a, cfg),
        LossKind::Noncontrastive => fit_noncontrastive(g, &laplacian(a), cfg),
    }
}

/// Like [`fit`], but reuses a factorization of the SSL Gram, so sweeps over
/// `K` or `β` pay for it once. The solver's ridge replaces `cfg.ridge`.
pub fn fit_with_solver(
    solver: &RegularizedSolver,
    a: &Adjacency,
    cfg: &SslConfig,
) -> Result<InducedSolution> {
    cfg.validate()?;
    ensure_dim(solver.dim(), a.n())?;
    let eig = match cfg.loss {
        LossKind::Contrastive => block_sym_eigen(&contrastive_target(a), &a.components())?,
        LossKind::Noncontrastive => sym_eigen(&noncontrastive_target(&laplacian(a), cfg.beta))?,
    };
    closed_form(solver, &eig, cfg)
}

fn solve_closed_form(
    g: &GramMatrix,
    target: &EigenDecomp,
    cfg: &SslConfig,
) -> Result<InducedSolution> {
    let solver = RegularizedSolver::new(g, cfg.ridge)?;
    closed_form(&solver, target, cfg)
}

fn closed_form(
    solver: &RegularizedSolver,
    target: &EigenDecomp,
    cfg: &SslConfig,
) -> Result<InducedSolution> {
    let n = solver.dim();
    let k = cfg.rep_dim.resolve(n)?;
    let (c_k, d_k) = truncate(target, k);
    // Mᵀ = (K + εI)^{-1} C_K D_K^{1/2}. Columns with a zero weight stay zero,
    // so only the live ones go through the solve.
    let live: Vec<usize> = (0..k).filter(|&j| d_k[j] > 0.0).collect();
    let mut scaled = c_k.select_columns(&live);
    for (mut col, &j) in scaled.column_iter_mut().zip(&live) {
        col *= d_k[j].sqrt();
    }
    let solved = solver.solve(&scaled);
    let b = &solved * solved.transpose();
    let mut mt = DMatrix::zeros(n, k);
    for (src, &j) in live.iter().enumerate() {
        mt.set_column(j, &solved.column(src));
    }
    Ok(InducedSolution {
        b: crate::kernels::symmetrize(b),
        m: mt.transpose(),
        target_values: d_k,
        ridge: solver.eps(),
    })
}

/// An induced kernel bound to its SSL points and base kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedKernel {
    base: KernelSpec,
    points: Points,
    solution: InducedSolution,
    config: SslConfig,
}

impl InducedKernel {
    pub fn new(
        base: KernelSpec,
        points: Points,
        solution: InducedSolution,
        config: SslConfig,
    ) -> Result<Self> {
        base.validate()?;
        ensure_dim(points.len(), solution.n())?;
        ensure_dim(solution.n(), solution.m.ncols())?;
        Ok(Self {
            base,
            points,
            solution,
            config,
        })
    }

    /// Builds the Gram on `points` and fits the closed form for `cfg.loss`.
    pub fn fit(base: &KernelSpec, points: &Points, a: &Adjacency, cfg: &SslConfig) -> Result<Self> {
        let g = gram(base, points)?;
        let solution = fit(&g, a, cfg)?;
        Self::new(base.clone(), points.clone(), solution, cfg.clone())
    }

    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn config(&self) -> &SslConfig {
        &self.config
    }

    pub fn solution(&self) -> &InducedSolution {
        &self.solution
    }

    /// `B`.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.solution.b
    }

    /// `M`, with `MᵀM = B`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.solution.m
    }

    pub fn n(&self) -> usize {
        self.solution.n()
    }

    pub fn rep_dim(&self) -> usize {
        self.solution.rep_dim()
    }

    /// A copy whose factor is `Q M`; `Q` must be a `K x K` orthogonal matrix.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        let k = self.rep_dim();
        if q.nrows() != k || q.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: q.nrows(),
            });
        }
        if (q.transpose() * q - DMatrix::<f64>::identity(k, k))
            .abs()
            .max()
            > 1e-10
        {
            return Err(Error::InvalidParameter("rotation is not orthogonal".into()));
        }
        let mut out = self.clone();
        out.solution.m = q * &self.solution.m;
        Ok(out)
    }

    /// Representations of `xs`, one column per point (`K x n`).
    pub fn represent_many(&self, xs: &Points) -> Result<DMatrix<f64>> {
        let k_sx = cross(&self.base, &self.points, xs)?;
        Ok(&self.solution.m * k_sx.matrix())
    }

    /// Induced Gram over `xs`.
    pub fn gram(&self, xs: &Points) -> Result<GramMatrix> {
        let r = self.represent_many(xs)?;
        GramMatrix::new(crate::kernels::symmetrize(r.tr_mul(&r)))
    }

    /// Induced cross matrix between `xs` and `ys`.
    pub fn cross(&self, xs: &Points, ys: &Points) -> Result<CrossMatrix> {
        let rx = self.represent_many(xs)?;
        let ry = self.represent_many(ys)?;
        CrossMatrix::new(rx.tr_mul(&ry))
    }
}

/// `M k_{s,x}`.
pub fn represent(ik: &InducedKernel, x: &[f64]) -> Result<DVector<f64>> {
    let xs = Points::new(x.to_vec(), x.len().max(1))?;
    ensure_dim(ik.points.dim(), xs.dim())?;
    Ok(ik.represent_many(&xs)?.column(0).into_owned())
}

/// `k*(x, y) = k_{x,s} B k_{s,y}`, evaluated as `⟨M k_{s,x}, M k_{s,y}⟩`.
pub fn eval_induced(ik: &InducedKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    let rx = represent(ik, x)?;
    let ry = represent(ik, y)?;
    Ok(rx.dot(&ry))
}

/// `‖Zᵀ(I - 11ᵀ/N)Z - I‖_F² + β Tr(Zᵀ L Z)` for `Z` of shape `N x K`.
pub fn loss_vic(z: &DMatrix<f64>, l: &Laplacian, beta: f64) -> Result<f64> {
    ensure_dim(l.n(), z.nrows())?;
    let n = z.nrows();
    let k = z.ncols();
    let mean = z.row_sum() / n as f64;
    let mut centered = z.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = z.tr_mul(&centered) - DMatrix::<f64>::identity(k, k);
    let invariance = z.tr_mul(&(l.matrix() * z)).trace();
    Ok(cov.norm_squared() + beta * invariance)
}

/// `‖Z Zᵀ P - (P - βL/2)‖_F²` with `P = I - 11ᵀ/N`; same minimizers as
/// [`loss_vic`].
pub fn loss_vic_equivalent(z: &DMatrix<f64>, l: &Laplacian, beta: f64) -> Result<f64> {
    ensure_dim(l.n(), z.nrows())?;
    let n = z.nrows();
    let zz = z * z.transpose();
    // Right-multiplying by P subtracts each row's mean.
    let mut zzp = zz;
    for mut row in zzp.row_iter_mut() {
        let mean = row.sum() / n as f64;
        row.add_scalar_mut(-mean);
    }
    Ok((zzp - noncontrastive_target(l, beta)).norm_squared())
}

/// `‖Z Zᵀ - (I + A)‖_F²`.
pub fn loss_contrastive(z: &DMatrix<f64>, a: &Adjacency) -> Result<f64> {
    ensure_dim(a.n(), z.nrows())?;
    Ok((z * z.transpose() - a.with_identity()).norm_squared())
}

#[cfg(test)]
mod tests;
