//! `sdp-check`: solves the batched semidefinite program and checks it against
//! the closed form (single batch) or the dual bound (contrastive).

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use ssl_kernel::graph::pairwise_adjacency;
use ssl_kernel::induced::{fit, LossKind};
use ssl_kernel::kernels::io::load_gram;
use ssl_kernel::kernels::{gram, GramMatrix, Points};
use ssl_kernel::sdp::{
    batch_targets, dual_lower_bound, make_batches, solve_sdp, write_trace_csv, BatchPlan,
    SdpOptions, SdpSolution, TraceRow,
};

use crate::config::{check_cap, Config};
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_json};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdpReport {
    pub n: usize,
    pub batches: usize,
    pub loss: String,
    pub beta: f64,
    pub rank: Option<usize>,
    pub converged: bool,
    pub stalled: bool,
    pub iterations: usize,
    pub objective: f64,
    pub max_residual: f64,
    pub min_eigenvalue: f64,
    /// Contrastive only.
    pub dual_lower_bound: Option<f64>,
    /// Single batch without truncation only: `max |B - B_closed|`.
    pub closed_form_max_abs_diff: Option<f64>,
    /// Same, `‖B - B_closed‖_F / ‖B_closed‖_F`.
    pub closed_form_relative_frobenius: Option<f64>,
    pub closed_form_objective: Option<f64>,
    /// Steps at constant `ρ` where the fixed-point residual went up.
    pub fixed_point_increases: usize,
}

pub struct SdpOutcome {
    pub report: SdpReport,
    pub solution: SdpSolution,
    pub files: Vec<PathBuf>,
}

/// `n_pairs` standard Gaussian points in `dim` dimensions, each followed by a
/// copy jittered with `noise` times standard Gaussian noise.
pub fn jittered_pairs(n_pairs: usize, dim: usize, noise: f64, seed: u64) -> Result<Points> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n_pairs * dim);
    for _ in 0..n_pairs {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let jitter: Vec<f64> = (0..dim)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                noise * e
            })
            .collect();
        data.extend_from_slice(&x);
        data.extend(x.iter().zip(&jitter).map(|(a, e)| a + e));
    }
    Ok(Points::new(data, dim)?)
}

/// Increases of the fixed-point residual between consecutive trace rows that
/// share the same `ρ`, beyond roundoff.
pub fn fixed_point_increases(trace: &[TraceRow]) -> usize {
    trace
        .windows(2)
        .filter(|w| w[0].rho == w[1].rho)
        .filter(|w| w[1].fixed_point_residual > w[0].fixed_point_residual * (1.0 + 1e-9) + 1e-14)
        .count()
}

fn input_gram(cfg: &Config) -> Result<GramMatrix> {
    let s = &cfg.sdp;
    match &s.gram {
        Some(path) => load_gram(path).map_err(|e| match e {
            ssl_kernel::Error::Io(io) => CliError::io(path, io),
            other => other.into(),
        }),
        None => {
            check_cap(2 * s.n_pairs, s.max_n)?;
            let pts = jittered_pairs(s.n_pairs, s.dim, s.noise, cfg.seed)?;
            Ok(gram(&cfg.kernel.spec()?, &pts)?)
        }
    }
}

/// Solves and scores without touching the output directory.
pub fn run_sdp(cfg: &Config) -> Result<(SdpReport, SdpSolution)> {
    cfg.validate()?;
    let s = &cfg.sdp;
    let g = input_gram(cfg)?;
    let n = g.n();
    check_cap(n, s.max_n)?;
    if n % 2 != 0 {
        return Err(CliError::Config(format!(
            "the gram has {n} rows; pairs need an even count"
        )));
    }
    let a = pairwise_adjacency(n / 2)?;
    let batches = match s.batch_size {
        Some(b) => make_batches(n, b, cfg.seed)?,
        None => vec![(0..n).collect()],
    };
    let plan = BatchPlan::new(batches, &a)?;
    let ssl_cfg = s.ssl_config();
    let targets = batch_targets(&plan, &ssl_cfg)?;
    let opts = SdpOptions {
        tol: s.tol,
        max_iter: s.max_iter,
        rho: s.rho,
        ridge: None,
        rank: s.rank,
        stall_window: s.stall_window,
    };
    let sol = solve_sdp(&g, &plan, &targets, &opts)?;

    let dual = match ssl_cfg.loss {
        LossKind::Contrastive => Some(dual_lower_bound(&g, &plan, &targets)?),
        LossKind::Noncontrastive => None,
    };
    let (mut max_abs, mut rel_frob, mut cf_obj) = (None, None, None);
    if plan.len() == 1 && s.rank.is_none() {
        let closed = fit(&g, &a, &ssl_cfg)?;
        let diff: DMatrix<f64> = &sol.b - &closed.b;
        max_abs = Some(diff.abs().max());
        rel_frob = Some(diff.norm() / closed.b.norm().max(f64::MIN_POSITIVE));
        cf_obj = Some(closed.b.component_mul(g.matrix()).sum());
    }
    let report = SdpReport {
        n,
        batches: plan.len(),
        loss: ssl_cfg.loss.to_string(),
        beta: ssl_cfg.beta,
        rank: s.rank,
        converged: sol.converged,
        stalled: sol.stalled,
        iterations: sol.iterations,
        objective: sol.objective,
        max_residual: sol.max_residual(),
        min_eigenvalue: sol.min_eigenvalue()?,
        dual_lower_bound: dual,
        closed_form_max_abs_diff: max_abs,
        closed_form_relative_frobenius: rel_frob,
        closed_form_objective: cf_obj,
        fixed_point_increases: fixed_point_increases(&sol.trace),
    };
    Ok((report, sol))
}

/// Writes `sdp_report.json` and `sdp_trace.csv`. A run that misses the
/// tolerance still writes both files, then fails with exit code 3.
pub fn cmd_sdp_check(cfg: &Config) -> Result<SdpOutcome> {
    let (report, solution) = run_sdp(cfg)?;
    ensure_dir(&cfg.out)?;
    let report_path = cfg.out.join("sdp_report.json");
    let trace_path = cfg.out.join("sdp_trace.csv");
    write_json(&report_path, &report)?;
    let file = File::create(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
    write_trace_csv(&solution.trace, BufWriter::new(file))?;
    if !report.converged {
        return Err(CliError::NoConvergence(format!(
            "ADMM {} after {} iterations with max residual {:.3e} (tol {:.1e})",
            if report.stalled { "stalled" } else { "stopped" },
            report.iterations,
            report.max_residual,
            cfg.sdp.tol
        )));
    }
    Ok(SdpOutcome {
        report,
        solution,
        files: vec![report_path, trace_path],
    })
}
