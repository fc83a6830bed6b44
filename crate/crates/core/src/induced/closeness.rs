use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{InducedKernel, LossKind};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::kernels::{eval, gram, sym_eigen, KernelSpec, Points};

/// Outcome of sampling perturbed pairs around augmentation-related anchors.
#[derive(Clone, Debug, Serialize)]
pub struct ClosenessReport {
    pub delta: f64,
    /// Allowed feature-space distance `Δ / (5 ‖K_ss^{-1}‖₂ √N)`.
    pub radius: f64,
    /// Radius of the input-space ball the proposals are drawn from.
    pub input_radius: f64,
    pub trials: usize,
    /// Proposals discarded for leaving the feature-space ball.
    pub rejected: usize,
    pub min_value: f64,
    /// `min_value - (1 - Δ)`.
    pub margin: f64,
    pub violations: usize,
}

impl ClosenessReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// `1 / (5 ‖K_ss^{-1}‖₂ √N)`, using the same ridge as the fit.
pub fn closeness_radius(ik: &InducedKernel) -> Result<f64> {
    let g = gram(ik.base(), ik.points())?;
    let eig = sym_eigen(g.matrix())?;
    let lambda_min = eig.values[eig.dim() - 1] + ik.solution().ridge;
    if !(lambda_min > 0.0) {
        return Err(Error::Singular(f64::INFINITY));
    }
    let inv_norm = 1.0 / lambda_min;
    Ok(1.0 / (5.0 * inv_norm * (ik.n() as f64).sqrt()))
}

fn feature_distance(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let d2 = eval(spec, x, x)? - 2.0 * eval(spec, x, y)? + eval(spec, y, y)?;
    Ok(d2.max(0.0).sqrt())
}

/// Input-space radius at which the feature distance reaches `radius`.
fn input_radius(spec: &KernelSpec, anchor: &[f64], radius: f64) -> Result<f64> {
    if let KernelSpec::Rbf { sigma } = spec {
        // ‖Φ(x) - Φ(y)‖² = 2 - 2 exp(-r² / 2σ²)
        let arg = 1.0 - 0.5 * radius * radius;
        if arg > 0.0 {
            return Ok(sigma * (-2.0 * arg.ln()).sqrt());
        }
    }
    // Bisection along the first coordinate axis.
    let mut probe = anchor.to_vec();
    let mut dist_at = |t: f64| -> Result<f64> {
        probe[0] = anchor[0] + t;
        feature_distance(spec, &probe, anchor)
    };
    let mut hi = 1e-6;
    while dist_at(hi)? < radius {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidParameter(
                "feature distance does not grow with input distance".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if dist_at(mid)? < radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

fn sample_in_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, u)| if norm > 0.0 { c + r * u / norm } else { *c })
        .collect()
}

/// Samples `trials` pairs `(x, x')` with `x` within the allowed feature-space
/// radius of `x_i` and `x'` within it of `x_j`, for random edges `(i, j)` of
/// the pairwise adjacency `a`, and records `k*(x, x')` against `1 - Δ`.
///
/// Proposals come from an input-space ball slightly larger than the feature
/// ball and are rejected when they leave it.
pub fn check_closeness_bound<R: Rng + ?Sized>(
    ik: &InducedKernel,
    a: &Adjacency,
    trials: usize,
    delta: f64,
    rng: &mut R,
) -> Result<ClosenessReport> {
    if ik.config().loss != LossKind::Contrastive {
        return Err(Error::InvalidParameter(
            "closeness bound needs a contrastive induced kernel".into(),
        ));
    }
    if matches!(ik.base(), KernelSpec::Precomputed(_)) {
        return Err(Error::InvalidParameter(
            "precomputed kernels have no input space to perturb".into(),
        ));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    crate::error::ensure_dim(ik.n(), a.n())?;
    let points = ik.points();
    for i in 0..points.len() {
        let kii = eval(ik.base(), points.row(i), points.row(i))?;
        if (kii - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "base kernel is not normalized: k(x_{i}, x_{i}) = {kii}"
            )));
        }
    }
    if a.matrix().row_iter().any(|r| r.sum() != 1.0) {
        return Err(Error::InvalidParameter("adjacency is not pairwise".into()));
    }
    let edges = a.edges();

    let radius = delta * closeness_radius(ik)?;
    let mut xs = Points::empty(points.dim());
    let mut ys = Points::empty(points.dim());
    let mut rejected = 0;
    let mut max_input_radius = 0.0_f64;
    let max_attempts = trials.saturating_mul(50).max(100);
    let mut attempts = 0;
    while xs.len() < trials {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::InvalidParameter(
                "rejection sampler accepted too few proposals".into(),
            ));
        }
        let (mut i, mut j) = edges[rng.random_range(0..edges.len())];
        if rng.random::<bool>() {
            std::mem::swap(&mut i, &mut j);
        }
        let mut pair = Vec::with_capacity(2);
        for anchor in [points.row(i), points.row(j)] {
            let rho = 1.25 * input_radius(ik.base(), anchor, radius)?;
            max_input_radius = max_input_radius.max(rho);
            let x = sample_in_ball(anchor, rho, rng);
            if feature_distance(ik.base(), &x, anchor)? > radius {
                break;
            }
            pair.push(x);
        }
        if pair.len() < 2 {
            rejected += 1;
            continue;
        }
        xs.push(&pair[0])?;
        ys.push(&pair[1])?;
    }

    let rx = ik.represent_many(&xs)?;
    let ry = ik.represent_many(&ys)?;
    let threshold = 1.0 - delta;
    let mut min_value = f64::INFINITY;
    let mut violations = 0;
    for t in 0..trials {
        let v = rx.column(t).dot(&ry.column(t));
        min_value = min_value.min(v);
        if v < threshold {
            violations += 1;
        }
    }
    Ok(ClosenessReport {
        delta,
        radius,
        input_radius: max_input_radius,
        trials,
        rejected,
        min_value,
        margin: min_value - threshold,
        violations,
    })
}
