//! Batched induced kernels as a semidefinite program.
//!
//! ```text
//! minimize    Tr(B K)
//! subject to  K_{s_j,s} B K_{s,s_j} = T_j            (contrastive)
//!             K_{s_j,s} B K_{s,s_j} P_j = T_j        (non-contrastive, P_j = I - 11ᵀ/b_j)
//!             B ⪰ 0
//! ```
//!
//! The solver works on `G = K B K`, where the batch constraints only touch the
//! diagonal blocks `G[s_j, s_j]` and the objective becomes `Tr(K^{-1} G)`.
//! Feasible `G` live on a face of the PSD cone (see `Face`), so ADMM runs on
//! the reduced matrix `H`: projection onto the affine set, projection onto
//! the PSD cone, scaled dual update, with residual balancing on `ρ`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{ensure_dim, Error, Result};
use crate::graph::{laplacian, Adjacency};
use crate::induced::{LossKind, SslConfig};
use crate::kernels::{psd_from_eigen, sym_eigen, symmetrize, top_k, GramMatrix, RegularizedSolver};

/// A partition of the SSL points into batches, with each batch's adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    n: usize,
    batches: Vec<Vec<usize>>,
    adjacency: Vec<Adjacency>,
}

impl BatchPlan {
    /// `batches` must partition `0..a.n()`; each batch sees the edges of `a`
    /// among its own members.
    pub fn new(batches: Vec<Vec<usize>>, a: &Adjacency) -> Result<Self> {
        let n = a.n();
        let mut seen = vec![false; n];
        for batch in &batches {
            if batch.is_empty() {
                return Err(Error::InvalidParameter("empty batch".into()));
            }
            for &i in batch {
                if i >= n {
                    return Err(Error::IndexOutOfRange { index: i, size: n });
                }
                if seen[i] {
                    return Err(Error::OverlappingGroups(i));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "point {missing} is in no batch"
            )));
        }
        let adjacency = batches.iter().map(|b| a.select(b)).collect();
        Ok(Self {
            n,
            batches,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn batches(&self) -> &[Vec<usize>] {
        &self.batches
    }

    pub fn adjacency(&self) -> &[Adjacency] {
        &self.adjacency
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// `K_{s,s_j}` for each batch.
    pub fn cross_blocks(&self, g: &GramMatrix) -> Vec<DMatrix<f64>> {
        self.batches
            .iter()
            .map(|b| g.matrix().select_columns(b))
            .collect()
    }
}

/// Shuffles `0..n` with `seed` and cuts it into batches of `b`; the last batch
/// may be smaller. Each batch is sorted.
pub fn make_batches(n: usize, b: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if b == 0 || b > n {
        return Err(Error::InvalidParameter(format!(
            "batch size {b} outside 1..={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(b)
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_unstable();
            v
        })
        .collect())
}

/// Per-batch right-hand sides of the constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchTargets {
    pub loss: LossKind,
    pub targets: Vec<DMatrix<f64>>,
}

/// Contrastive: top-`K` positive part of `I + A_j`. Non-contrastive: top-`K`
/// positive part of `P_j - β L_j / 2`. `K` is capped at each batch size.
pub fn batch_targets(plan: &BatchPlan, cfg: &SslConfig) -> Result<BatchTargets> {
    cfg.validate()?;
    let targets = plan
        .adjacency
        .iter()
        .map(|a| {
            let b = a.n();
            let k = match cfg.rep_dim {
                crate::induced::RepDim::Full => b,
                crate::induced::RepDim::Fixed(k) => k.min(b),
            };
            let t = match cfg.loss {
                LossKind::Contrastive => crate::induced::contrastive_target(a),
                LossKind::Noncontrastive => {
                    crate::induced::noncontrastive_target(&laplacian(a), cfg.beta)
                }
            };
            let (c, d) = top_k(&t, k)?;
            let mut cd = c.clone();
            for (mut col, v) in cd.column_iter_mut().zip(d.iter()) {
                col *= *v;
            }
            Ok(symmetrize(cd * c.transpose()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchTargets {
        loss: cfg.loss,
        targets,
    })
}

fn check_targets(plan: &BatchPlan, t: &BatchTargets) -> Result<()> {
    ensure_dim(plan.len(), t.targets.len())?;
    for (b, m) in plan.batches.iter().zip(&t.targets) {
        ensure_dim(b.len(), m.nrows())?;
        ensure_dim(b.len(), m.ncols())?;
    }
    Ok(())
}

/// Right-multiplication by `I - 11ᵀ/b`: subtracts each row's mean.
fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let b = m.ncols() as f64;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / b;
        row.add_scalar_mut(-mean);
    }
    out
}

fn block_residual(block: &DMatrix<f64>, target: &DMatrix<f64>, loss: LossKind) -> f64 {
    match loss {
        LossKind::Contrastive => (block - target).norm(),
        LossKind::Noncontrastive => (center_columns(block) - target).norm(),
    }
}

/// `‖K_{s_j,s} B K_{s,s_j} (P_j) - T_j‖_F` per batch.
pub fn residuals(
    b: &DMatrix<f64>,
    g: &GramMatrix,
    plan: &BatchPlan,
    targets: &BatchTargets,
) -> Result<Vec<f64>> {
    ensure_dim(g.n(), b.nrows())?;
    ensure_dim(plan.n(), g.n())?;
    check_targets(plan, targets)?;
    Ok(plan
        .cross_blocks(g)
        .iter()
        .zip(&targets.targets)
        .map(|(kj, t)| {
            let block = kj.transpose() * b * kj;
            block_residual(&block, t, targets.loss)
        })
        .collect())
}

/// A dual-feasible lower bound on the contrastive optimum.
///
/// Uses `Y_j = K[s_j, s_j]^{-1} / n_batches`, which is feasible because each
/// Nyström term `K_{s,s_j} K[s_j,s_j]^{-1} K_{s_j,s}` is dominated by `K`. With a
/// single batch this is the optimal dual `Y* = K^{-1}`.
pub fn dual_lower_bound(g: &GramMatrix, plan: &BatchPlan, targets: &BatchTargets) -> Result<f64> {
    if targets.loss != LossKind::Contrastive {
        return Err(Error::InvalidParameter(
            "dual bound is only implemented for the contrastive loss".into(),
        ));
    }
    check_targets(plan, targets)?;
    let scale = 1.0 / plan.len() as f64;
    let mut total = 0.0;
    for (batch, t) in plan.batches.iter().zip(&targets.targets) {
        let sub = g.select(batch);
        let inv = crate::kernels::reg_inverse(&sub, 0.0)?;
        total += scale * (inv.component_mul(t)).sum();
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct SdpOptions {
    /// Tolerance on constraint residuals, `‖G - X‖_F` and the scaled dual
    /// residual.
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Ridge for `K^{-1}`, with the same meaning as `SslConfig::ridge`.
    pub ridge: Option<f64>,
    /// Keep only the top `K` eigenpairs of the returned `B`.
    pub rank: Option<usize>,
    /// Iterations without a 1% drop in the primal residual before giving up.
    pub stall_window: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 5000,
            rho: 1.0,
            ridge: None,
            rank: None,
            stall_window: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// `Tr(K^{-1} X)` at the PSD iterate.
    pub objective: f64,
    pub max_residual: f64,
    /// Smallest eigenvalue of the affine iterate `G`.
    pub min_eigenvalue: f64,
    /// Objective plus `ρ/2 ‖G - X‖²`.
    pub merit: f64,
    /// `ρ (‖X⁺ - X‖² + ‖U⁺ - U‖²)`, non-increasing while `ρ` is unchanged.
    pub fixed_point_residual: f64,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub b: DMatrix<f64>,
    /// `Tr(B K)`.
    pub objective: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The primal residual stopped improving before the tolerance was met.
    pub stalled: bool,
    pub trace: Vec<TraceRow>,
}

impl SdpSolution {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, &r| a.max(r))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = sym_eigen(&self.b)?;
        Ok(eig.values[eig.dim() - 1])
    }
}

/// Writes `iteration,objective,max_residual,min_eigenvalue,merit,fixed_point_residual,rho`.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

struct AffineSet<'a> {
    batches: &'a [Vec<usize>],
    targets: &'a BatchTargets,
}

impl AffineSet<'_> {
    /// Euclidean projection: fixes each diagonal block, up to the `c 11ᵀ`
    /// freedom the non-contrastive constraint leaves.
    #[cfg(test)]
    fn project(&self, v: &mut DMatrix<f64>) {
        for (batch, t) in self.batches.iter().zip(&self.targets.targets) {
            let c = match self.targets.loss {
                LossKind::Contrastive => 0.0,
                LossKind::Noncontrastive => {
                    let mut diff = 0.0;
                    for (a, &i) in batch.iter().enumerate() {
                        for (b, &j) in batch.iter().enumerate() {
                            diff += v[(i, j)] - t[(a, b)];
                        }
                    }
                    diff / (batch.len() * batch.len()) as f64
                }
            };
            for (a, &i) in batch.iter().enumerate() {
                for (b, &j) in batch.iter().enumerate() {
                    v[(i, j)] = t[(a, b)] + c;
                }
            }
        }
    }

    fn max_residual(&self, x: &DMatrix<f64>) -> f64 {
        self.batches
            .iter()
            .zip(&self.targets.targets)
            .map(|(batch, t)| {
                let block = x.select_rows(batch).select_columns(batch);
                block_residual(&block, t, self.targets.loss)
            })
            .fold(0.0, f64::max)
    }
}

/// The face of the PSD cone that contains every feasible `G`.
///
/// A PSD `G` whose diagonal block equals a singular `T_j` must vanish on the
/// null space of `T_j`, so `G = Q H Qᵀ` with `Q` block-diagonal and spanning
/// each `range(T_j)` (plus `1` in the non-contrastive case, where the block
/// may shift by `c 11ᵀ`). The reduced problem in `H` is strictly feasible.
struct Face {
    q: DMatrix<f64>,
    blocks: Vec<FaceBlock>,
}

struct FaceBlock {
    start: usize,
    values: Vec<f64>,
    /// Trailing column for the `1/√b` direction, whose diagonal entry is free.
    free: bool,
}

impl FaceBlock {
    fn len(&self) -> usize {
        self.values.len() + usize::from(self.free)
    }
}

impl Face {
    fn new(plan: &BatchPlan, targets: &BatchTargets) -> Result<Self> {
        let free = targets.loss == LossKind::Noncontrastive;
        let mut columns: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        let mut blocks = Vec::with_capacity(plan.len());
        for (batch, t) in plan.batches.iter().zip(&targets.targets) {
            let eig = sym_eigen(t)?;
            let cutoff = eig.positive_threshold();
            let start = columns.len();
            let mut values = Vec::new();
            for (k, &v) in eig.values.iter().enumerate() {
                if v > cutoff {
                    values.push(v);
                    let col = batch
                        .iter()
                        .zip(eig.vectors.column(k).iter())
                        .map(|(&i, &x)| (i, x))
                        .collect();
                    columns.push((start, col));
                }
            }
            if free {
                let w = 1.0 / (batch.len() as f64).sqrt();
                columns.push((start, batch.iter().map(|&i| (i, w)).collect()));
            }
            blocks.push(FaceBlock {
                start,
                values,
                free,
            });
        }
        let mut q = DMatrix::zeros(plan.n(), columns.len());
        for (c, (_, col)) in columns.iter().enumerate() {
            for &(i, x) in col {
                q[(i, c)] = x;
            }
        }
        Ok(Self { q, blocks })
    }

    fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// Euclidean projection onto the reduced affine set.
    fn project(&self, h: &mut DMatrix<f64>) {
        for blk in &self.blocks {
            let r = blk.values.len();
            let s = blk.start;
            for a in 0..r {
                for b in 0..blk.len() {
                    let v = if a == b { blk.values[a] } else { 0.0 };
                    h[(s + a, s + b)] = v;
                    h[(s + b, s + a)] = v;
                }
            }
        }
    }

    fn lift(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&self.q * h * self.q.transpose())
    }
}

pub fn solve_sdp(
    g: &GramMatrix,
    plan: &BatchPlan,
    targets: &BatchTargets,
    opts: &SdpOptions,
) -> Result<SdpSolution> {
    ensure_dim(plan.n(), g.n())?;
    check_targets(plan, targets)?;
    if !(opts.tol > 0.0) || !(opts.rho > 0.0) {
        return Err(Error::InvalidParameter(
            "tol and rho must be positive".into(),
        ));
    }
    let n = g.n();
    let w = RegularizedSolver::new(g, opts.ridge)?.inverse();
    let aff = AffineSet {
        batches: &plan.batches,
        targets,
    };
    let face = Face::new(plan, targets)?;
    let r = face.dim();
    let wh = symmetrize(face.q.transpose() * &w * &face.q);
    let dual_scale = wh.norm().max(1.0);

    // The block-diagonal target is feasible.
    let mut x = DMatrix::<f64>::zeros(r, r);
    face.project(&mut x);
    let mut u = DMatrix::<f64>::zeros(r, r);
    let mut rho = opts.rho;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut stalled = false;
    let mut best_primal = f64::INFINITY;
    let mut best_at = 0;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let mut gk = &x - &u - &wh / rho;
        face.project(&mut gk);
        let g_eig = sym_eigen(&gk)?;
        let x_prev = x;
        x = psd_from_eigen(&sym_eigen(&(&gk + &u))?);
        let diff = &gk - &x;
        u += &diff;

        let primal = diff.norm();
        let dx = (&x - &x_prev).norm();
        let dual = rho * dx;
        let max_res = aff.max_residual(&face.lift(&x));
        let objective = wh.component_mul(&x).sum();
        // Eigenvalues of Q H Qᵀ are those of H plus zeros.
        let mut min_eig = g_eig.values[r - 1];
        if r < n {
            min_eig = min_eig.min(0.0);
        }
        trace.push(TraceRow {
            iteration: it,
            objective,
            max_residual: max_res,
            min_eigenvalue: min_eig,
            merit: objective + 0.5 * rho * primal * primal,
            fixed_point_residual: rho * (dx * dx + primal * primal),
            rho,
        });

        if max_res <= opts.tol && primal <= opts.tol && dual <= opts.tol * dual_scale {
            converged = true;
            break;
        }
        if primal < 0.99 * best_primal {
            best_primal = primal;
            best_at = it;
        } else if it - best_at >= opts.stall_window && max_res > opts.tol {
            stalled = true;
            break;
        }
        if primal > 10.0 * dual {
            rho *= 2.0;
            u /= 2.0;
        } else if dual > 10.0 * primal {
            rho /= 2.0;
            u *= 2.0;
        }
    }

    let mut b = symmetrize(&w * face.lift(&x) * &w);
    if let Some(k) = opts.rank {
        let (c, d) = top_k(&b, k.clamp(1, n))?;
        let mut cd = c.clone();
        for (mut col, v) in cd.column_iter_mut().zip(d.iter()) {
            col *= *v;
        }
        b = symmetrize(cd * c.transpose());
    }
    let objective = b.component_mul(g.matrix()).sum();
    let res = residuals(&b, g, plan, targets)?;
    Ok(SdpSolution {
        b,
        objective,
        residuals: res,
        iterations,
        converged,
        stalled,
        trace,
    })
}
