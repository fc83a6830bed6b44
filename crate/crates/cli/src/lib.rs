//! Experiment driver behind the `ssl-kernel` binary.

pub mod ablate;
pub mod config;
pub mod error;
pub mod experiment;
mod output;
pub mod pipeline;
pub mod sdp_check;
pub mod spiral;
mod svg;

use std::fmt::Write;
use std::path::Path;

pub use config::{Config, Overrides};
pub use error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SpiralDemo,
    Experiment,
    Ablate,
    SdpCheck,
}

/// Loads the config, applies overrides, runs `command` and returns a short
/// human-readable summary.
pub fn run(command: Command, config: &Path, overrides: &Overrides) -> Result<String> {
    let mut cfg = Config::load(config)?;
    cfg.apply(overrides);
    run_config(command, &cfg)
}

pub fn run_config(command: Command, cfg: &Config) -> Result<String> {
    let mut s = String::new();
    let files = match command {
        Command::SpiralDemo => {
            let out = spiral::cmd_spiral_demo(cfg)?;
            for f in &out.fits {
                let r = &f.run;
                let _ = writeln!(
                    s,
                    "{:<6} radius {:<5} edges {:<5} across arms {:<4} within/cross {:.3}",
                    r.name, r.radius, r.edges, r.cross_arm_edges, r.ratio
                );
            }
            out.files
        }
        Command::Experiment => {
            let out = experiment::cmd_experiment(cfg)?;
            for r in &out.summary {
                let _ = writeln!(
                    s,
                    "{:<7} n={:<4} a={:<3} {:<15} acc {:.4} ± {:.4}  s_N {:.2}  bound {:.3}",
                    r.augmentation,
                    r.n,
                    r.n_aug,
                    r.arm,
                    r.mean_accuracy,
                    r.std_accuracy,
                    r.mean_s_n,
                    r.mean_bound
                );
            }
            out.files
        }
        Command::Ablate => {
            let out = ablate::cmd_ablate(cfg)?;
            if let Some(best) = out
                .rows
                .iter()
                .filter(|r| r.model != "base")
                .max_by(|a, b| a.accuracy.total_cmp(&b.accuracy))
            {
                let beta = best.beta.map(|b| format!(" beta={b}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "best {} k={} c={}{beta}: accuracy {:.4}",
                    best.model, best.k, best.c, best.accuracy
                );
            }
            let _ = writeln!(s, "{} rows", out.rows.len());
            out.files
        }
        Command::SdpCheck => {
            let out = sdp_check::cmd_sdp_check(cfg)?;
            let r = &out.report;
            let _ = writeln!(
                s,
                "n {} batches {} iterations {} objective {:.6} max residual {:.2e}",
                r.n, r.batches, r.iterations, r.objective, r.max_residual
            );
            if let Some(d) = r.closed_form_relative_frobenius {
                let _ = writeln!(s, "relative difference to closed form {d:.2e}");
            }
            if let Some(d) = r.dual_lower_bound {
                let _ = writeln!(s, "dual lower bound {d:.6}");
            }
            out.files
        }
    };
    for f in files {
        let _ = writeln!(s, "wrote {}", f.display());
    }
    Ok(s)
}
