//! Supervised consumers of (induced) Gram matrices: kernel ridge regression,
//! a soft-margin SVM solved by SMO, one-vs-rest classification and the
//! complexity quantity `s_N(K) = Tr(K)/N · yᵀ K^{-1} y`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::kernels::{sym_eigen, CrossMatrix, GramMatrix, RegularizedSolver};

/// Scores for each query column of a `train × query` cross matrix.
pub trait DecisionFunction {
    fn n_train(&self) -> usize;
    fn decision_values(&self, k_query: &CrossMatrix) -> Result<DVector<f64>>;
}

#[derive(Clone, Debug)]
pub struct RegressionModel {
    pub alpha: DVector<f64>,
    pub lambda: f64,
}

/// `α = (K + λI)^{-1} y`. `λ = 0` requires a well-conditioned `K`.
pub fn krr_fit(k: &GramMatrix, y: &[f64], lambda: f64) -> Result<RegressionModel> {
    ensure_dim(k.n(), y.len())?;
    let solver = RegularizedSolver::new(k, Some(lambda))?;
    let rhs = DMatrix::from_column_slice(y.len(), 1, y);
    let alpha = solver.solve(&rhs).column(0).into_owned();
    Ok(RegressionModel { alpha, lambda })
}

pub fn krr_predict(model: &RegressionModel, k_query: &CrossMatrix) -> Result<DVector<f64>> {
    model.decision_values(k_query)
}

impl DecisionFunction for RegressionModel {
    fn n_train(&self) -> usize {
        self.alpha.len()
    }

    fn decision_values(&self, k_query: &CrossMatrix) -> Result<DVector<f64>> {
        ensure_dim(self.alpha.len(), k_query.nrows())?;
        Ok(k_query.matrix().tr_mul(&self.alpha))
    }
}

/// Stopping tolerance on the maximal KKT violation `m(α) - M(α)`.
pub const SVM_KKT_TOL: f64 = 1e-4;
const TAU: f64 = 1e-12;

/// Binary soft-margin SVM in dual form: `f(x) = Σ α_i y_i k(x_i, x) + bias`.
#[derive(Clone, Debug)]
pub struct SvmModel {
    pub alpha: DVector<f64>,
    pub labels: DVector<f64>,
    pub bias: f64,
    pub c: f64,
    pub iterations: usize,
}

impl SvmModel {
    /// `Σ α_i - ½ Σ α_i α_j y_i y_j K_ij`.
    pub fn dual_objective(&self, k: &GramMatrix) -> f64 {
        let ya = self.alpha.component_mul(&self.labels);
        self.alpha.sum() - 0.5 * ya.dot(&(k.matrix() * &ya))
    }

    pub fn support_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > 0.0).count()
    }
}

impl DecisionFunction for SvmModel {
    fn n_train(&self) -> usize {
        self.alpha.len()
    }

    fn decision_values(&self, k_query: &CrossMatrix) -> Result<DVector<f64>> {
        ensure_dim(self.alpha.len(), k_query.nrows())?;
        let ya = self.alpha.component_mul(&self.labels);
        Ok(k_query.matrix().tr_mul(&ya).add_scalar(self.bias))
    }
}

/// SMO with second-order working-set selection. `labels` must be ±1.
pub fn svm_fit(k: &GramMatrix, labels: &[f64], c: f64) -> Result<SvmModel> {
    let n = k.n();
    ensure_dim(n, labels.len())?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "C must be positive, got {c}"
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter(format!(
            "SVM labels must be ±1, got {bad}"
        )));
    }
    if !(labels.contains(&1.0) && labels.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    let km = k.matrix();
    let y = labels;
    let mut alpha = vec![0.0; n];
    // Gradient of ½ αᵀQα - 1ᵀα with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
    let max_iter = (100 * n).max(10_000_000);
    let mut iterations = 0;

    loop {
        let mut i = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > m_up {
                m_up = -y[t] * grad[t];
                i = t;
            }
        }
        let mut j = usize::MAX;
        let mut m_low = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            m_low = m_low.min(v);
            if i != usize::MAX && v < m_up {
                let b = m_up - v;
                let mut a = km[(i, i)] + km[(t, t)] - 2.0 * km[(i, t)];
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -b * b / a;
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || m_up - m_low < SVM_KKT_TOL {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence(max_iter));
        }
        iterations += 1;

        let mut a = km[(i, i)] + km[(j, j)] - 2.0 * km[(i, j)];
        if a <= 0.0 {
            a = TAU;
        }
        let b = -y[i] * grad[i] + y[j] * grad[j];
        // Move along α_i += y_i t, α_j -= y_j t, clipped to the box.
        let room = |a_k: f64, dir: f64| if dir > 0.0 { c - a_k } else { a_k };
        let t = (b / a).min(room(alpha[i], y[i])).min(room(alpha[j], -y[j]));
        let di = y[i] * t;
        let dj = -y[j] * t;
        alpha[i] = (alpha[i] + di).clamp(0.0, c);
        alpha[j] = (alpha[j] + dj).clamp(0.0, c);
        for (s, g) in grad.iter_mut().enumerate() {
            *g += y[s] * (y[i] * km[(s, i)] * di + y[j] * km[(s, j)] * dj);
        }
    }

    Ok(SvmModel {
        bias: -svm_rho(&alpha, &grad, y, c),
        alpha: DVector::from_vec(alpha),
        labels: DVector::from_column_slice(y),
        c,
        iterations,
    })
}

/// Offset from free support vectors, or the midpoint of the feasible
/// interval when none are free.
fn svm_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// `+1` for `class`, `-1` otherwise.
pub fn one_vs_rest_labels(labels: &[usize], class: usize) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == class { 1.0 } else { -1.0 })
        .collect()
}

/// One binary SVM per class, fitted in parallel.
pub fn fit_ovr_svm(
    k: &GramMatrix,
    labels: &[usize],
    n_classes: usize,
    c: f64,
) -> Result<Vec<SvmModel>> {
    ensure_dim(k.n(), labels.len())?;
    if n_classes < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    (0..n_classes)
        .into_par_iter()
        .map(|class| svm_fit(k, &one_vs_rest_labels(labels, class), c))
        .collect()
}

/// One ±1 regression target per class, sharing a single solve.
pub fn fit_ovr_krr(
    k: &GramMatrix,
    labels: &[usize],
    n_classes: usize,
    lambda: f64,
) -> Result<Vec<RegressionModel>> {
    ensure_dim(k.n(), labels.len())?;
    if n_classes < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    let solver = RegularizedSolver::new(k, Some(lambda))?;
    let mut rhs = DMatrix::zeros(labels.len(), n_classes);
    for class in 0..n_classes {
        rhs.set_column(class, &DVector::from_vec(one_vs_rest_labels(labels, class)));
    }
    let alpha = solver.solve(&rhs);
    Ok(alpha
        .column_iter()
        .map(|col| RegressionModel {
            alpha: col.into_owned(),
            lambda,
        })
        .collect())
}

/// Argmax of per-class decision values; ties go to the lowest class.
pub fn ovr_classify<M: DecisionFunction>(
    models: &[M],
    k_query: &CrossMatrix,
) -> Result<Vec<usize>> {
    if models.len() < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    let scores = models
        .iter()
        .map(|m| m.decision_values(k_query))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..k_query.ncols())
        .map(|q| {
            let mut best = 0;
            for (class, s) in scores.iter().enumerate().skip(1) {
                if s[q] > scores[best][q] {
                    best = class;
                }
            }
            best
        })
        .collect())
}

fn check_targets(k: &GramMatrix, y: &[f64]) -> Result<()> {
    ensure_dim(k.n(), y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("targets must be finite".into()));
    }
    Ok(())
}

/// `Tr(K)/N · yᵀ (K + εI)^{-1} y`. `eps = None` uses `1e-8 Tr(K)/N`;
/// `Some(0.0)` demands an invertible `K`.
pub fn complexity_sn(k: &GramMatrix, y: &[f64], eps: Option<f64>) -> Result<f64> {
    check_targets(k, y)?;
    let n = k.n() as f64;
    let eps = eps.unwrap_or_else(|| crate::kernels::default_ridge(k));
    let solver = RegularizedSolver::new(k, Some(eps))?;
    let yv = DMatrix::from_column_slice(y.len(), 1, y);
    let quad = yv.column(0).dot(&solver.solve(&yv).column(0));
    Ok(k.trace() / n * quad)
}

/// `s_N` with the Moore-Penrose pseudo-inverse of `K`, ignoring eigenvalues
/// at or below `1e-10 · max |λ|`. Exact for rank-deficient block kernels.
pub fn complexity_sn_pinv(k: &GramMatrix, y: &[f64]) -> Result<f64> {
    check_targets(k, y)?;
    let eig = sym_eigen(k.matrix())?;
    let cutoff = eig.positive_threshold();
    let yv = DVector::from_column_slice(y);
    let proj = eig.vectors.tr_mul(&yv);
    let quad: f64 = proj
        .iter()
        .zip(eig.values.iter())
        .filter(|(_, &l)| l > cutoff)
        .map(|(p, l)| p * p / l)
        .sum();
    Ok(k.trace() / k.n() as f64 * quad)
}

/// `(2√2 L + 3b)/√2 · √(s_N / N) + 3b √(ln(2/(δ(e-1))) / 2N)`, using
/// `√(Tr(K) yᵀK^{-1}y) / N = √(s_N / N)`.
pub fn bound_from_sn(sn: f64, n: usize, lipschitz: f64, b_range: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    if !(sn >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "s_N must be nonnegative, got {sn}"
        )));
    }
    let n = n as f64;
    let e = std::f64::consts::E;
    let lead = (2.0 * 2f64.sqrt() * lipschitz + 3.0 * b_range) / 2f64.sqrt();
    let tail = 3.0 * b_range * ((2.0 / (delta * (e - 1.0))).ln() / (2.0 * n)).sqrt();
    Ok(lead * (sn / n).sqrt() + tail)
}

pub fn generalization_bound(
    k: &GramMatrix,
    y: &[f64],
    lipschitz: f64,
    b_range: f64,
    delta: f64,
    eps: Option<f64>,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let sn = complexity_sn(k, y, eps)?;
    bound_from_sn(sn, k.n(), lipschitz, b_range, delta)
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    ensure_dim(truth.len(), predictions.len())?;
    if truth.is_empty() {
        return Err(Error::Empty);
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Even digits → `+1`, odd → `-1`.
pub fn even_odd_labels(labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l % 2 == 0 { 1.0 } else { -1.0 })
        .collect()
}

/// One row of experiment output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub experiment_id: String,
    /// Which model produced the row, e.g. `ssl`, `supervised_aug`, `supervised`.
    pub arm: String,
    pub kernel_kind: String,
    pub augmentation: String,
    pub seed: u64,
    pub n: usize,
    pub n_aug: usize,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    pub c: f64,
    pub accuracy: f64,
    pub s_n: f64,
    pub bound: f64,
}
