//! `spiral-demo`: induced kernels on two entangled spirals, with a
//! neighborhood graph that either respects the arms or bridges them.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::Serialize;
use ssl_kernel::data::{spiral_with, LabeledDataset};
use ssl_kernel::graph::neighborhood_adjacency;
use ssl_kernel::induced::{fit_with_solver, InducedKernel, SslConfig};
use ssl_kernel::kernels::{cross, gram, KernelSpec, Points, RegularizedSolver};

use crate::config::{check_cap, Config};
use crate::error::{CliError, Result};
use crate::output::{ensure_dir, write_csv, write_text};
use crate::svg::{diverging, normalize_max_abs, Svg};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpiralRun {
    pub name: String,
    pub radius: f64,
    /// Kernel value a pair must exceed to be linked.
    pub threshold: f64,
    pub edges: usize,
    pub cross_arm_edges: usize,
    /// Mean `|k*|` over distinct pairs on the same arm.
    pub within_mean: f64,
    /// Mean `|k*|` over pairs on different arms.
    pub cross_mean: f64,
    pub ratio: f64,
}

pub struct SpiralFit {
    pub run: SpiralRun,
    pub kernel: InducedKernel,
}

pub struct SpiralOutcome {
    pub data: LabeledDataset,
    pub fits: Vec<SpiralFit>,
    pub files: Vec<PathBuf>,
}

/// RBF value at distance `radius`, so that `k > threshold` means "closer
/// than `radius`".
pub fn radius_threshold(spec: &KernelSpec, radius: f64) -> Result<f64> {
    match spec {
        KernelSpec::Rbf { sigma } => Ok((-radius * radius / (2.0 * sigma * sigma)).exp()),
        other => Err(CliError::Config(format!(
            "spiral-demo needs an rbf kernel, got {}",
            other.name()
        ))),
    }
}

/// Mean absolute entry over same-label pairs (off the diagonal) and over
/// different-label pairs.
pub fn arm_means(m: &DMatrix<f64>, labels: &[usize]) -> (f64, f64) {
    let (mut within, mut nw, mut across, mut na) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..labels.len() {
        for i in 0..labels.len() {
            if i == j {
                continue;
            }
            if labels[i] == labels[j] {
                within += m[(i, j)].abs();
                nw += 1;
            } else {
                across += m[(i, j)].abs();
                na += 1;
            }
        }
    }
    (within / nw.max(1) as f64, across / na.max(1) as f64)
}

/// Fits both runs without touching the filesystem.
pub fn fit_spiral(cfg: &Config) -> Result<(LabeledDataset, Vec<SpiralFit>)> {
    let s = &cfg.spiral;
    check_cap(2 * s.n_per_arm, cfg.max_samples)?;
    let spec = cfg.kernel.spec()?;
    let data = spiral_with(s.params.unwrap_or_default(), s.n_per_arm, cfg.seed)?;
    let g = gram(&spec, &data.points)?;
    let solver = RegularizedSolver::new(&g, None)?;
    let ssl_cfg = SslConfig::noncontrastive(s.beta);
    let mut fits = Vec::new();
    for (name, radius) in [("small", s.small_radius), ("large", s.large_radius)] {
        let threshold = radius_threshold(&spec, radius)?;
        let a = neighborhood_adjacency(&g, threshold);
        let edges = a.edges();
        let cross_arm_edges = edges
            .iter()
            .filter(|&&(i, j)| data.labels[i] != data.labels[j])
            .count();
        let solution = fit_with_solver(&solver, &a, &ssl_cfg)?;
        let (within_mean, cross_mean) = arm_means(&solution.induced_gram(&g), &data.labels);
        let kernel =
            InducedKernel::new(spec.clone(), data.points.clone(), solution, ssl_cfg.clone())?;
        fits.push(SpiralFit {
            run: SpiralRun {
                name: name.into(),
                radius,
                threshold,
                edges: edges.len(),
                cross_arm_edges,
                within_mean,
                cross_mean,
                ratio: within_mean / cross_mean,
            },
            kernel,
        });
    }
    Ok((data, fits))
}

/// Three arm-0 points at the inner, middle and outer part of the arm.
fn default_anchors(data: &LabeledDataset) -> Vec<usize> {
    let mut arm0: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == 0).collect();
    let radius = |i: usize| {
        let p = data.points.row(i);
        p[0].hypot(p[1])
    };
    arm0.sort_by(|&a, &b| radius(a).total_cmp(&radius(b)));
    [0.15, 0.5, 0.85]
        .iter()
        .map(|q| arm0[(q * (arm0.len() - 1) as f64).round() as usize])
        .collect()
}

fn grid_points(extent: f64, resolution: usize) -> Result<Points> {
    let step = 2.0 * extent / resolution as f64;
    let mut data = Vec::with_capacity(2 * resolution * resolution);
    for r in 0..resolution {
        let y = extent - (r as f64 + 0.5) * step;
        for c in 0..resolution {
            data.push(-extent + (c as f64 + 0.5) * step);
            data.push(y);
        }
    }
    Ok(Points::new(data, 2)?)
}

const PANEL: f64 = 170.0;
const GAP: f64 = 14.0;
const LEFT: f64 = 96.0;
const TOP: f64 = 44.0;

/// Rows: base kernel and induced kernel; columns: anchors. Each panel shows
/// `k(anchor, ·)` over the plane, scaled by its largest absolute value.
fn heatmap_figure(
    data: &LabeledDataset,
    fit: &SpiralFit,
    anchors: &[usize],
    resolution: usize,
) -> Result<String> {
    let extent = 1.1
        * data
            .points
            .as_slice()
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
    let grid = grid_points(extent, resolution)?;
    let anchor_points = data.points.select(anchors);
    let base = cross(fit.kernel.base(), &anchor_points, &grid)?;
    let induced = fit.kernel.cross(&anchor_points, &grid)?;

    let width = LEFT + anchors.len() as f64 * (PANEL + GAP);
    let height = TOP + 2.0 * (PANEL + GAP) + 10.0;
    let mut svg = Svg::new(width, height);
    let run = &fit.run;
    svg.text(
        LEFT,
        18.0,
        12.0,
        "start",
        &format!(
            "radius {} ({} edges, {} across arms), within/cross |k*| = {:.3}",
            run.radius, run.edges, run.cross_arm_edges, run.ratio
        ),
    );
    let to_panel = |x: f64, y: f64, px: f64, py: f64| {
        (
            px + (x + extent) / (2.0 * extent) * PANEL,
            py + (extent - y) / (2.0 * extent) * PANEL,
        )
    };
    for (row, (label, values)) in [("base kernel", &base), ("induced kernel", &induced)]
        .into_iter()
        .enumerate()
    {
        let py = TOP + row as f64 * (PANEL + GAP);
        svg.text(LEFT - 8.0, py + PANEL / 2.0, 11.0, "end", label);
        for (col, &anchor) in anchors.iter().enumerate() {
            let px = LEFT + col as f64 * (PANEL + GAP);
            if row == 0 {
                svg.text(
                    px + PANEL / 2.0,
                    TOP - 6.0,
                    10.0,
                    "middle",
                    &format!("anchor {anchor}"),
                );
            }
            let mut panel: Vec<f64> = values.matrix().row(col).iter().copied().collect();
            normalize_max_abs(&mut panel);
            svg.heatmap(
                px, py, PANEL, PANEL, resolution, resolution, &panel, diverging,
            );
            for i in 0..data.len() {
                let p = data.points.row(i);
                let (x, y) = to_panel(p[0], p[1], px, py);
                let shade = if data.labels[i] == 0 {
                    (30, 30, 30)
                } else {
                    (140, 140, 140)
                };
                svg.circle(x, y, 1.2, shade, None);
            }
            let p = data.points.row(anchor);
            let (x, y) = to_panel(p[0], p[1], px, py);
            svg.circle(x, y, 3.5, (255, 215, 0), Some((0, 0, 0)));
        }
    }
    Ok(svg.finish())
}

/// Writes `spiral_summary.csv`, `spiral_small.svg` and `spiral_large.svg`.
pub fn cmd_spiral_demo(cfg: &Config) -> Result<SpiralOutcome> {
    cfg.validate()?;
    let (data, fits) = fit_spiral(cfg)?;
    let anchors = cfg
        .spiral
        .anchors
        .clone()
        .unwrap_or_else(|| default_anchors(&data));
    ensure_dir(&cfg.out)?;
    let summary = cfg.out.join("spiral_summary.csv");
    let runs: Vec<SpiralRun> = fits.iter().map(|f| f.run.clone()).collect();
    write_csv(&summary, &runs)?;
    let mut files = vec![summary];
    for fit in &fits {
        let path = cfg.out.join(format!("spiral_{}.svg", fit.run.name));
        write_text(
            &path,
            &heatmap_figure(&data, fit, &anchors, cfg.spiral.resolution)?,
        )?;
        files.push(path);
    }
    Ok(SpiralOutcome { data, fits, files })
}
