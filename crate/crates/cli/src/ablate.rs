//! `ablate`: accuracy and `s_N` over representation dimension and SVM `C`
//! (contrastive), and over representation dimension and `β`
//! (non-contrastive), all on one sampled problem.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use ssl_kernel::downstream::bound_from_sn;
use ssl_kernel::induced::{fit_with_solver, LossKind, RepDim, SslConfig};
use ssl_kernel::kernels::RegularizedSolver;

use crate::config::{check_cap, Config};
use crate::error::Result;
use crate::output::{ensure_dir, write_csv, write_json, write_text};
use crate::pipeline::{
    induced_view, prepare, sn_even_odd, svm_accuracy, with_workers, Prepared, Sample, Sources,
};
use crate::svg::{sequential, Svg};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblateRow {
    /// `base`, `contrastive` or `noncontrastive`.
    pub model: String,
    /// Requested representation dimension, `full` or a number.
    pub k: String,
    /// Nonzero representation coordinates actually fitted.
    pub rank: usize,
    pub beta: Option<f64>,
    pub c: f64,
    pub accuracy: f64,
    pub s_n: f64,
    pub bound: f64,
}

pub struct AblateOutcome {
    pub rows: Vec<AblateRow>,
    pub files: Vec<PathBuf>,
}

struct Job {
    loss: LossKind,
    k: RepDim,
    beta: f64,
    cs: Vec<f64>,
}

fn score(
    cfg: &Config,
    p: &Prepared,
    solver: &RegularizedSolver,
    job: &Job,
) -> Result<Vec<AblateRow>> {
    let ab = &cfg.ablate;
    let ssl_cfg = SslConfig {
        loss: job.loss,
        beta: job.beta,
        rep_dim: job.k,
        ridge: None,
    };
    let sol = fit_with_solver(solver, &p.ssl.adjacency, &ssl_cfg)?;
    let rank = sol.rank();
    let (k_ind, q_ind) = induced_view(&sol, &p.gram, &p.test_cross)?;
    drop(sol);
    let s_n = sn_even_odd(&k_ind, &p.ssl.labels)?;
    let bound = bound_from_sn(
        s_n,
        p.ssl.len(),
        ab.bound.lipschitz,
        ab.bound.range,
        ab.bound.delta,
    )?;
    job.cs
        .iter()
        .map(|&c| {
            Ok(AblateRow {
                model: job.loss.to_string(),
                k: job.k.to_string(),
                rank,
                beta: (job.loss == LossKind::Noncontrastive).then_some(job.beta),
                c,
                accuracy: svm_accuracy(&k_ind, &p.ssl.labels, &q_ind, &p.test.labels, c)?,
                s_n,
                bound,
            })
        })
        .collect()
}

fn base_rows(cfg: &Config, p: &Prepared) -> Result<Vec<AblateRow>> {
    let ab = &cfg.ablate;
    let s_n = sn_even_odd(&p.gram, &p.ssl.labels)?;
    let bound = bound_from_sn(
        s_n,
        p.ssl.len(),
        ab.bound.lipschitz,
        ab.bound.range,
        ab.bound.delta,
    )?;
    ab.c_grid
        .par_iter()
        .map(|&c| {
            Ok(AblateRow {
                model: "base".into(),
                k: RepDim::Full.to_string(),
                rank: p.ssl.len(),
                beta: None,
                c,
                accuracy: svm_accuracy(&p.gram, &p.ssl.labels, &p.test_cross, &p.test.labels, c)?,
                s_n,
                bound,
            })
        })
        .collect()
}

/// Computes every row without touching the output directory.
pub fn run_ablate(cfg: &Config) -> Result<Vec<AblateRow>> {
    cfg.validate()?;
    let ab = &cfg.ablate;
    check_cap(
        ab.n_originals * (ab.n_aug + 1) + cfg.dataset.n_test,
        cfg.max_samples,
    )?;
    let spec = cfg.kernel.spec()?;
    let sources = Sources::open(cfg)?;
    let p = prepare(
        &sources,
        &spec,
        &Sample {
            n_originals: ab.n_originals,
            n_aug: ab.n_aug,
            augmentation: &ab.augmentation,
            adjacency: ab.adjacency,
            n_test: cfg.dataset.n_test,
            seed: cfg.seed,
        },
    )?;
    drop(sources);
    let solver = RegularizedSolver::new(&p.gram, None)?;
    let mut jobs: Vec<Job> = ab
        .k_grid
        .iter()
        .map(|&k| Job {
            loss: LossKind::Contrastive,
            k,
            beta: 0.0,
            cs: ab.c_grid.clone(),
        })
        .collect();
    for &k in &ab.k_grid {
        for &beta in &ab.beta_grid {
            jobs.push(Job {
                loss: LossKind::Noncontrastive,
                k,
                beta,
                cs: vec![ab.c],
            });
        }
    }
    with_workers(cfg.workers, || {
        let mut rows = base_rows(cfg, &p)?;
        let fitted: Vec<Vec<AblateRow>> = jobs
            .par_iter()
            .map(|job| score(cfg, &p, &solver, job))
            .collect::<Result<_>>()?;
        rows.extend(fitted.into_iter().flatten());
        Ok(rows)
    })?
}

const CELL_W: f64 = 64.0;
const CELL_H: f64 = 30.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 60.0;

/// Accuracy grid: one row per `k`, one column per entry of `cols`. Colors span
/// the grid's own accuracy range.
pub fn grid_figure(
    title: &str,
    col_label: &str,
    rows: &[String],
    cols: &[f64],
    values: &[f64],
) -> String {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scaled: Vec<f64> = values.iter().map(|v| (v - lo) / span).collect();
    let width = LEFT + cols.len() as f64 * CELL_W + 20.0;
    let height = TOP + rows.len() as f64 * CELL_H + 30.0;
    let mut svg = Svg::new(width, height);
    svg.text(LEFT, 18.0, 12.0, "start", title);
    svg.text(
        LEFT + cols.len() as f64 * CELL_W / 2.0,
        36.0,
        11.0,
        "middle",
        col_label,
    );
    svg.text(LEFT - 8.0, TOP - 8.0, 11.0, "end", "K");
    svg.heatmap(
        LEFT,
        TOP,
        cols.len() as f64 * CELL_W,
        rows.len() as f64 * CELL_H,
        rows.len(),
        cols.len(),
        &scaled,
        sequential,
    );
    for (j, c) in cols.iter().enumerate() {
        svg.text(
            LEFT + (j as f64 + 0.5) * CELL_W,
            TOP - 8.0,
            10.0,
            "middle",
            &format!("{c}"),
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + (i as f64 + 0.6) * CELL_H;
        svg.text(LEFT - 8.0, y, 10.0, "end", r);
        for (j, v) in values[i * cols.len()..(i + 1) * cols.len()]
            .iter()
            .enumerate()
        {
            svg.text(
                LEFT + (j as f64 + 0.5) * CELL_W,
                y,
                10.0,
                "middle",
                &format!("{v:.3}"),
            );
        }
    }
    svg.finish()
}

fn surface(
    rows: &[AblateRow],
    model: &str,
    cfg: &Config,
    by_beta: bool,
) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let ks: Vec<String> = cfg.ablate.k_grid.iter().map(|k| k.to_string()).collect();
    let cols = if by_beta {
        cfg.ablate.beta_grid.clone()
    } else {
        cfg.ablate.c_grid.clone()
    };
    let mut values = Vec::with_capacity(ks.len() * cols.len());
    for k in &ks {
        for &col in &cols {
            let hit = rows.iter().find(|r| {
                r.model == model
                    && &r.k == k
                    && if by_beta {
                        r.beta == Some(col)
                    } else {
                        r.c == col
                    }
            });
            values.push(hit.map_or(f64::NAN, |r| r.accuracy));
        }
    }
    (ks, cols, values)
}

/// Writes `ablate.csv`, `ablate.json`, `ablate_contrastive.svg` and
/// `ablate_noncontrastive.svg`.
pub fn cmd_ablate(cfg: &Config) -> Result<AblateOutcome> {
    let rows = run_ablate(cfg)?;
    ensure_dir(&cfg.out)?;
    let files = vec![
        cfg.out.join("ablate.csv"),
        cfg.out.join("ablate.json"),
        cfg.out.join("ablate_contrastive.svg"),
        cfg.out.join("ablate_noncontrastive.svg"),
    ];
    write_csv(&files[0], &rows)?;
    write_json(&files[1], &rows)?;
    let (ks, cs, values) = surface(&rows, "contrastive", cfg, false);
    write_text(
        &files[2],
        &grid_figure("contrastive: test accuracy", "SVM C", &ks, &cs, &values),
    )?;
    let (ks, betas, values) = surface(&rows, "noncontrastive", cfg, true);
    write_text(
        &files[3],
        &grid_figure(
            &format!("non-contrastive: test accuracy (C = {})", cfg.ablate.c),
            "beta",
            &ks,
            &betas,
            &values,
        ),
    )?;
    Ok(AblateOutcome { rows, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_has_one_cell_per_value() {
        let doc = grid_figure(
            "t",
            "C",
            &["4".into(), "full".into()],
            &[0.1, 1.0, 10.0],
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        );
        // Background, six cells, outline.
        assert_eq!(doc.matches("<rect").count(), 8);
        assert!(doc.contains(">0.600<"));
        assert!(doc.contains(">full<"));
    }

    #[test]
    fn surface_layout() {
        let mut cfg = Config::default();
        cfg.ablate.k_grid = vec![RepDim::Fixed(2), RepDim::Full];
        cfg.ablate.c_grid = vec![1.0, 10.0];
        let row = |k: &str, c: f64, accuracy: f64| AblateRow {
            model: "contrastive".into(),
            k: k.into(),
            rank: 2,
            beta: None,
            c,
            accuracy,
            s_n: 0.0,
            bound: 0.0,
        };
        let rows = vec![
            row("full", 10.0, 0.9),
            row("2", 1.0, 0.5),
            row("2", 10.0, 0.6),
        ];
        let (ks, cs, v) = surface(&rows, "contrastive", &cfg, false);
        assert_eq!(ks, vec!["2".to_string(), "full".to_string()]);
        assert_eq!(cs, vec![1.0, 10.0]);
        assert_eq!(&v[..2], &[0.5, 0.6]);
        assert!(v[2].is_nan());
        assert_eq!(v[3], 0.9);
    }
}
