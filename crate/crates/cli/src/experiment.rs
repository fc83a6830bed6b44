//! `experiment`: accuracy and `s_N` of three downstream arms on image data.
//!
//! * `supervised`: base kernel, originals only.
//! * `supervised_aug`: base kernel, originals plus augmentations carrying the
//!   label of their original.
//! * `ssl`: induced kernel fitted on the augmentation graph, same training
//!   points as `supervised_aug`.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use ssl_kernel::data::AugmentationKind;
use ssl_kernel::downstream::{bound_from_sn, MetricsRecord};
use ssl_kernel::induced::{fit, LossKind};
use ssl_kernel::kernels::KernelSpec;

use crate::config::{check_cap, BoundConfig, Config};
use crate::error::Result;
use crate::output::{ensure_dir, write_csv, write_json};
use crate::pipeline::{
    induced_view, prepare, sn_even_odd, svm_accuracy, with_workers, Sample, Sources,
};

pub const ARMS: [&str; 3] = ["supervised", "supervised_aug", "ssl"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub augmentation: String,
    pub n: usize,
    pub n_aug: usize,
    pub arm: String,
    pub seeds: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_s_n: f64,
    pub mean_bound: f64,
}

pub struct ExperimentOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
struct Cell {
    augmentation: AugmentationKind,
    n: usize,
    n_aug: usize,
    seed: u64,
}

fn cells(cfg: &Config) -> Vec<Cell> {
    let e = &cfg.experiment;
    let mut out = Vec::new();
    for aug in &e.augmentations {
        for &n in &e.n_originals {
            for &n_aug in &e.n_aug {
                for seed in cfg.experiment_seeds() {
                    out.push(Cell {
                        augmentation: aug.clone(),
                        n,
                        n_aug,
                        seed,
                    });
                }
            }
        }
    }
    out
}

fn bound(b: &BoundConfig, s_n: f64, n: usize) -> Result<f64> {
    Ok(bound_from_sn(s_n, n, b.lipschitz, b.range, b.delta)?)
}

fn run_cell(
    cfg: &Config,
    spec: &KernelSpec,
    sources: &Sources,
    cell: &Cell,
) -> Result<Vec<MetricsRecord>> {
    let e = &cfg.experiment;
    let p = prepare(
        sources,
        spec,
        &Sample {
            n_originals: cell.n,
            n_aug: cell.n_aug,
            augmentation: &cell.augmentation,
            adjacency: e.adjacency,
            n_test: cfg.dataset.n_test,
            seed: cell.seed,
        },
    )?;
    let record =
        |arm: &str, k: Option<usize>, beta: Option<f64>, accuracy: f64, s_n: f64, n: usize| {
            Ok::<_, crate::error::CliError>(MetricsRecord {
                experiment_id: format!(
                    "{}-n{}-a{}-s{}",
                    cell.augmentation.name(),
                    cell.n,
                    cell.n_aug,
                    cell.seed
                ),
                arm: arm.into(),
                kernel_kind: spec.name().into(),
                augmentation: cell.augmentation.name().into(),
                seed: cell.seed,
                n: cell.n,
                n_aug: cell.n_aug,
                k,
                beta,
                c: e.c,
                accuracy,
                s_n,
                bound: bound(&e.bound, s_n, n)?,
            })
        };
    let truth = &p.test.labels;
    let mut out = Vec::with_capacity(ARMS.len());

    let originals = p.originals();
    let k_o = p.gram.select(&originals);
    let q_o = p.test_cross.select_rows(&originals);
    let labels_o: Vec<usize> = originals.iter().map(|&i| p.ssl.labels[i]).collect();
    let acc = svm_accuracy(&k_o, &labels_o, &q_o, truth, e.c)?;
    out.push(record(
        ARMS[0],
        None,
        None,
        acc,
        sn_even_odd(&k_o, &labels_o)?,
        originals.len(),
    )?);

    let n_all = p.ssl.len();
    let acc = svm_accuracy(&p.gram, &p.ssl.labels, &p.test_cross, truth, e.c)?;
    out.push(record(
        ARMS[1],
        None,
        None,
        acc,
        sn_even_odd(&p.gram, &p.ssl.labels)?,
        n_all,
    )?);

    let ssl_cfg = e.ssl_config();
    let sol = fit(&p.gram, &p.ssl.adjacency, &ssl_cfg)?;
    let rank = sol.rank();
    let (k_ind, q_ind) = induced_view(&sol, &p.gram, &p.test_cross)?;
    drop(sol);
    let acc = svm_accuracy(&k_ind, &p.ssl.labels, &q_ind, truth, e.c)?;
    let beta = (ssl_cfg.loss == LossKind::Noncontrastive).then_some(ssl_cfg.beta);
    out.push(record(
        ARMS[2],
        Some(rank),
        beta,
        acc,
        sn_even_odd(&k_ind, &p.ssl.labels)?,
        n_all,
    )?);
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-seed records averaged by (augmentation, n, n_aug, arm), in first-seen
/// order. The standard deviation is the sample one (0 for a single seed).
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize, usize, String)> = Vec::new();
    for r in records {
        let key = (r.augmentation.clone(), r.n, r.n_aug, r.arm.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(augmentation, n, n_aug, arm)| {
            let group: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| {
                    r.augmentation == augmentation && r.n == n && r.n_aug == n_aug && r.arm == arm
                })
                .collect();
            let acc: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
            let m = mean(&acc);
            let std = if acc.len() > 1 {
                (acc.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (acc.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                seeds: group.len(),
                mean_accuracy: m,
                std_accuracy: std,
                mean_s_n: mean(&group.iter().map(|r| r.s_n).collect::<Vec<_>>()),
                mean_bound: mean(&group.iter().map(|r| r.bound).collect::<Vec<_>>()),
                augmentation,
                n,
                n_aug,
                arm,
            }
        })
        .collect()
}

/// Runs every cell without touching the output directory.
pub fn run_experiment(cfg: &Config) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let e = &cfg.experiment;
    for &n in &e.n_originals {
        for &a in &e.n_aug {
            check_cap(n * (a + 1) + cfg.dataset.n_test, cfg.max_samples)?;
        }
    }
    let spec = cfg.kernel.spec()?;
    let sources = Sources::open(cfg)?;
    let cells = cells(cfg);
    let per_cell: Vec<Vec<MetricsRecord>> = with_workers(cfg.workers, || {
        cells
            .par_iter()
            .map(|c| run_cell(cfg, &spec, &sources, c))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Writes `metrics.json`, `metrics.csv` and `summary.csv`.
pub fn cmd_experiment(cfg: &Config) -> Result<ExperimentOutcome> {
    let records = run_experiment(cfg)?;
    let summary = summarize(&records);
    ensure_dir(&cfg.out)?;
    let files = vec![
        cfg.out.join("metrics.json"),
        cfg.out.join("metrics.csv"),
        cfg.out.join("summary.csv"),
    ];
    write_json(&files[0], &records)?;
    write_csv(&files[1], &records)?;
    write_csv(&files[2], &summary)?;
    Ok(ExperimentOutcome {
        records,
        summary,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(arm: &str, seed: u64, accuracy: f64) -> MetricsRecord {
        MetricsRecord {
            experiment_id: String::new(),
            arm: arm.into(),
            kernel_kind: "rbf".into(),
            augmentation: "affine".into(),
            seed,
            n: 8,
            n_aug: 2,
            k: None,
            beta: None,
            c: 1.0,
            accuracy,
            s_n: seed as f64,
            bound: 1.0,
        }
    }

    #[test]
    fn summary_groups_by_arm() {
        let rows = summarize(&[
            rec("ssl", 0, 0.5),
            rec("supervised", 0, 0.2),
            rec("ssl", 1, 0.7),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].arm, "ssl");
        assert_eq!(rows[0].seeds, 2);
        assert!((rows[0].mean_accuracy - 0.6).abs() < 1e-15);
        assert!((rows[0].std_accuracy - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(rows[0].mean_s_n, 0.5);
        assert_eq!(rows[1].std_accuracy, 0.0);
    }

    #[test]
    fn cells_cover_grid() {
        let mut cfg = Config::default();
        cfg.experiment.n_originals = vec![4, 8];
        cfg.experiment.seeds = Some(vec![1, 2, 3]);
        let c = cells(&cfg);
        assert_eq!(c.len(), 2 * 2 * 3);
        assert_eq!(c[0].seed, 1);
        assert_eq!(c[3].n, 8);
    }

    #[test]
    fn cap_is_checked_before_loading() {
        let mut cfg = Config::default();
        cfg.dataset.dir = Some("/nonexistent".into());
        cfg.experiment.n_originals = vec![1000];
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
