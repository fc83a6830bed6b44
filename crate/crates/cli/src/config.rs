//! Run configuration, read from TOML. Every command shares the top-level
//! keys and reads its own table (`[spiral]`, `[experiment]`, `[ablate]`,
//! `[sdp]`). A missing table means "use the defaults".

use std::path::{Path, PathBuf};

use serde::Deserialize;
use ssl_kernel::data::{AugmentationKind, SpiralParams};
use ssl_kernel::graph::GroupMode;
use ssl_kernel::induced::{LossKind, RepDim, SslConfig};
use ssl_kernel::kernels::KernelSpec;

use crate::error::{CliError, Result};

pub const DATA_DIR_ENV: &str = "SSL_KERNEL_DATA_DIR";
pub const DEFAULT_MAX_SAMPLES: usize = 5000;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for grid cells; unset uses one per core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Refuse runs whose sample count (SSL points plus test points) exceeds this.
    #[serde(default = "default_max_samples")]
    pub max_samples: usize,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub spiral: SpiralSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub ablate: AblateSection,
    #[serde(default)]
    pub sdp: SdpSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_max_samples() -> usize {
    DEFAULT_MAX_SAMPLES
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Rbf {
        sigma: f64,
    },
    Linear,
    Polynomial {
        degree: u32,
        #[serde(default)]
        coef: f64,
    },
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::Rbf { sigma: 1.0 }
    }
}

impl KernelConfig {
    pub fn spec(&self) -> Result<KernelSpec> {
        let spec = match *self {
            KernelConfig::Rbf { sigma } => KernelSpec::Rbf { sigma },
            KernelConfig::Linear => KernelSpec::Linear,
            KernelConfig::Polynomial { degree, coef } => KernelSpec::Polynomial { degree, coef },
        };
        spec.validate()
            .map_err(|e| CliError::Config(format!("kernel: {e}")))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Short name used in experiment ids.
    #[serde(default = "default_dataset_name")]
    pub name: String,
    /// Directory holding the IDX files. Falls back to `$SSL_KERNEL_DATA_DIR`,
    /// then `data/mnist`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_train_images")]
    pub train_images: String,
    #[serde(default = "default_train_labels")]
    pub train_labels: String,
    #[serde(default = "default_test_images")]
    pub test_images: String,
    #[serde(default = "default_test_labels")]
    pub test_labels: String,
    /// Test points drawn from the test files.
    #[serde(default = "default_n_test")]
    pub n_test: usize,
}

fn default_dataset_name() -> String {
    "mnist".into()
}
fn default_train_images() -> String {
    "train-images-idx3-ubyte.gz".into()
}
fn default_train_labels() -> String {
    "train-labels-idx1-ubyte.gz".into()
}
fn default_test_images() -> String {
    "t10k-images-idx3-ubyte.gz".into()
}
fn default_test_labels() -> String {
    "t10k-labels-idx1-ubyte.gz".into()
}
fn default_n_test() -> usize {
    2000
}

impl Default for DatasetConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty dataset table parses")
    }
}

impl DatasetConfig {
    pub fn root(&self) -> PathBuf {
        self.dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    pub fn train_paths(&self) -> (PathBuf, PathBuf) {
        let root = self.root();
        (root.join(&self.train_images), root.join(&self.train_labels))
    }

    pub fn test_paths(&self) -> (PathBuf, PathBuf) {
        let root = self.root();
        (root.join(&self.test_images), root.join(&self.test_labels))
    }
}

/// Bound constants: loss Lipschitz constant, loss range and confidence.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "one")]
    pub lipschitz: f64,
    #[serde(default = "one")]
    pub range: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.05
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            lipschitz: 1.0,
            range: 1.0,
            delta: 0.05,
        }
    }
}

impl BoundConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lipschitz >= 0.0 && self.range >= 0.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Config(format!(
                "invalid bound constants {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSection {
    #[serde(default = "default_n_per_arm")]
    pub n_per_arm: usize,
    #[serde(default = "default_spiral_beta")]
    pub beta: f64,
    /// Neighborhood radius in input space for the well-separated run.
    #[serde(default = "default_small_radius")]
    pub small_radius: f64,
    /// Neighborhood radius large enough to link the two arms.
    #[serde(default = "default_large_radius")]
    pub large_radius: f64,
    #[serde(default)]
    pub params: Option<SpiralParams>,
    /// Point indices whose kernel rows are drawn; unset picks three points
    /// along arm 0.
    #[serde(default)]
    pub anchors: Option<Vec<usize>>,
    /// Heatmap cells per side.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_n_per_arm() -> usize {
    100
}
fn default_spiral_beta() -> f64 {
    0.4
}
fn default_small_radius() -> f64 {
    2.5
}
fn default_large_radius() -> f64 {
    4.0
}
fn default_resolution() -> usize {
    48
}

impl Default for SpiralSection {
    fn default() -> Self {
        toml::from_str("").expect("empty spiral table parses")
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_n_originals")]
    pub n_originals: Vec<usize>,
    #[serde(default = "default_n_aug")]
    pub n_aug: Vec<usize>,
    #[serde(default = "default_augmentations")]
    pub augmentations: Vec<AugmentationKind>,
    #[serde(default)]
    pub adjacency: GroupMode,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub rep_dim: RepDim,
    /// SVM box constraint.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Unset runs the top-level seed only.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub bound: BoundConfig,
}

fn default_n_originals() -> Vec<usize> {
    vec![64]
}
fn default_n_aug() -> Vec<usize> {
    vec![32]
}
fn default_augmentations() -> Vec<AugmentationKind> {
    vec![AugmentationKind::affine(), AugmentationKind::blur()]
}
fn default_loss() -> LossKind {
    LossKind::Contrastive
}
fn default_c() -> f64 {
    1000.0
}

impl Default for ExperimentSection {
    fn default() -> Self {
        toml::from_str("").expect("empty experiment table parses")
    }
}

impl ExperimentSection {
    pub fn ssl_config(&self) -> SslConfig {
        SslConfig {
            loss: self.loss,
            beta: self.beta,
            rep_dim: self.rep_dim,
            ridge: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateSection {
    #[serde(default = "default_ablate_n")]
    pub n_originals: usize,
    #[serde(default = "default_ablate_aug")]
    pub n_aug: usize,
    #[serde(default = "default_ablate_augmentation")]
    pub augmentation: AugmentationKind,
    #[serde(default)]
    pub adjacency: GroupMode,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<RepDim>,
    /// SVM box constraints for the contrastive surface.
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    /// Invariance weights for the non-contrastive surface.
    #[serde(default = "default_beta_grid")]
    pub beta_grid: Vec<f64>,
    /// Box constraint used across the non-contrastive surface.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub bound: BoundConfig,
}

fn default_ablate_n() -> usize {
    32
}
fn default_ablate_aug() -> usize {
    16
}
fn default_ablate_augmentation() -> AugmentationKind {
    AugmentationKind::affine()
}
fn default_k_grid() -> Vec<RepDim> {
    vec![
        RepDim::Fixed(4),
        RepDim::Fixed(8),
        RepDim::Fixed(16),
        RepDim::Fixed(32),
        RepDim::Full,
    ]
}
fn default_c_grid() -> Vec<f64> {
    vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0]
}
fn default_beta_grid() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8]
}

impl Default for AblateSection {
    fn default() -> Self {
        toml::from_str("").expect("empty ablate table parses")
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpSection {
    /// A precomputed Gram (CSV or binary). Its rows are read as consecutive
    /// augmentation pairs `(0, 1), (2, 3), ...`.
    #[serde(default)]
    pub gram: Option<PathBuf>,
    /// Without `gram`: this many Gaussian originals, each with one jittered copy.
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_sdp_dim")]
    pub dim: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Unset solves a single batch, which has a closed-form reference.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "default_stall_window")]
    pub stall_window: usize,
    #[serde(default = "default_sdp_max_n")]
    pub max_n: usize,
}

fn default_n_pairs() -> usize {
    20
}
fn default_sdp_dim() -> usize {
    3
}
fn default_noise() -> f64 {
    0.3
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    50_000
}
fn default_stall_window() -> usize {
    20_000
}
fn default_sdp_max_n() -> usize {
    200
}

impl Default for SdpSection {
    fn default() -> Self {
        toml::from_str("").expect("empty sdp table parses")
    }
}

impl SdpSection {
    pub fn ssl_config(&self) -> SslConfig {
        SslConfig {
            loss: self.loss,
            beta: self.beta,
            rep_dim: RepDim::Full,
            ridge: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        // An unreadable config is a config error (exit 2), not an I/O failure.
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.experiment.seeds = None;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
    }

    pub fn experiment_seeds(&self) -> Vec<u64> {
        self.experiment
            .seeds
            .clone()
            .unwrap_or_else(|| vec![self.seed])
    }

    /// Checks everything that does not need data on disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        self.kernel.spec()?;
        if self.dataset.n_test == 0 {
            return bad("dataset.n_test must be positive".into());
        }

        let s = &self.spiral;
        if s.n_per_arm < 2 {
            return bad("spiral.n_per_arm must be at least 2".into());
        }
        if !(s.beta >= 0.0 && s.beta.is_finite()) {
            return bad("spiral.beta must be nonnegative".into());
        }
        if !(s.small_radius > 0.0 && s.large_radius > 0.0) {
            return bad("spiral radii must be positive".into());
        }
        if s.resolution < 2 {
            return bad("spiral.resolution must be at least 2".into());
        }
        if let Some(p) = s.params {
            if !(p.t_min.is_finite() && p.t_max.is_finite() && p.t_min < p.t_max) {
                return bad("spiral.params needs t_min < t_max".into());
            }
        }
        if let Some(anchors) = &s.anchors {
            if anchors.is_empty() {
                return bad("spiral.anchors must not be empty".into());
            }
            if let Some(&a) = anchors.iter().find(|&&a| a >= 2 * s.n_per_arm) {
                return bad(format!("spiral anchor {a} is not a point index"));
            }
        }

        let e = &self.experiment;
        if e.n_originals.is_empty() || e.n_aug.is_empty() || e.augmentations.is_empty() {
            return bad("experiment grids must be nonempty".into());
        }
        if e.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            return bad("experiment.seeds must be nonempty".into());
        }
        if e.n_originals.contains(&0) || e.n_aug.contains(&0) {
            return bad("experiment sizes must be positive".into());
        }
        for kind in &e.augmentations {
            kind.validate()
                .map_err(|err| CliError::Config(format!("experiment: {err}")))?;
        }
        e.ssl_config()
            .validate()
            .map_err(|err| CliError::Config(format!("experiment: {err}")))?;
        check_c(e.c)?;
        e.bound.validate()?;

        let a = &self.ablate;
        if a.k_grid.is_empty() || a.c_grid.is_empty() || a.beta_grid.is_empty() {
            return bad("ablate grids must be nonempty".into());
        }
        if a.n_originals == 0 || a.n_aug == 0 {
            return bad("ablate sizes must be positive".into());
        }
        a.augmentation
            .validate()
            .map_err(|err| CliError::Config(format!("ablate: {err}")))?;
        let n_ssl = a.n_originals * (a.n_aug + 1);
        for k in &a.k_grid {
            k.resolve(n_ssl)
                .map_err(|err| CliError::Config(format!("ablate.k_grid: {err}")))?;
        }
        for &c in a.c_grid.iter().chain([&a.c]) {
            check_c(c)?;
        }
        if a.beta_grid.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return bad("ablate.beta_grid entries must be nonnegative".into());
        }
        a.bound.validate()?;

        let d = &self.sdp;
        if d.gram.is_none() && (d.n_pairs == 0 || d.dim == 0) {
            return bad("sdp.n_pairs and sdp.dim must be positive".into());
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) {
            return bad("sdp.noise must be nonnegative".into());
        }
        if d.batch_size == Some(0) || d.rank == Some(0) {
            return bad("sdp.batch_size and sdp.rank must be positive".into());
        }
        if !(d.tol > 0.0 && d.rho > 0.0) || d.max_iter == 0 || d.stall_window == 0 {
            return bad("sdp solver settings must be positive".into());
        }
        d.ssl_config()
            .validate()
            .map_err(|err| CliError::Config(format!("sdp: {err}")))?;
        Ok(())
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("SVM C must be positive, got {c}")))
    }
}

/// Fails with a resource-cap error when `requested > cap`.
pub fn check_cap(requested: usize, cap: usize) -> Result<()> {
    if requested > cap {
        Err(CliError::ResourceCap { requested, cap })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.max_samples, DEFAULT_MAX_SAMPLES);
        assert_eq!(cfg.experiment.augmentations.len(), 2);
        assert_eq!(cfg.experiment_seeds(), vec![0]);
    }

    #[test]
    fn parses_full_example() {
        let cfg = Config::from_toml(
            r#"
            seed = 4
            out = "x"
            [kernel]
            kind = "rbf"
            sigma = 7.0
            [experiment]
            n_originals = [16, 64]
            augmentations = [{ kind = "affine", rot_deg = [-5.0, 5.0] }, { kind = "gaussian_blur" }]
            adjacency = "star"
            seeds = [0, 1, 2]
            [ablate]
            k_grid = [2, "full"]
            [sdp]
            loss = "noncontrastive"
            beta = 0.4
            batch_size = 10
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.kernel.spec().unwrap(), KernelSpec::Rbf { sigma: 7.0 });
        assert_eq!(cfg.experiment.adjacency, GroupMode::Star);
        assert_eq!(cfg.ablate.k_grid, vec![RepDim::Fixed(2), RepDim::Full]);
        match &cfg.experiment.augmentations[0] {
            AugmentationKind::Affine { rot_deg, scale, .. } => {
                assert_eq!(*rot_deg, (-5.0, 5.0));
                assert_eq!(*scale, (0.9, 1.1));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.sdp.ssl_config().loss, LossKind::Noncontrastive);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "unknown = 1",
            "[kernel]\nkind = \"rbf\"\nsigma = -1.0",
            "[experiment]\nn_originals = []",
            "[experiment]\nseeds = []",
            "[experiment]\nc = 0.0",
            "[ablate]\nk_grid = [100000]",
            "[ablate]\nbeta_grid = [-1.0]",
            "[spiral]\nn_per_arm = 1",
            "[spiral]\nanchors = [500]",
            "[sdp]\nbatch_size = 0",
            "workers = 0",
            "[experiment]\naugmentations = [{ kind = \"gaussian_blur\", sigma = 0.0 }]",
        ] {
            let parsed = Config::from_toml(text).and_then(|c| c.validate());
            assert!(matches!(parsed, Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = Config::from_toml("seed = 1\n[experiment]\nseeds = [5, 6]").unwrap();
        assert_eq!(cfg.experiment_seeds(), vec![5, 6]);
        cfg.apply(&Overrides {
            out: Some("elsewhere".into()),
            seed: Some(9),
            workers: Some(2),
        });
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
        assert_eq!(cfg.experiment_seeds(), vec![9]);
        assert_eq!(cfg.workers, Some(2));
    }

    #[test]
    fn cap_check() {
        assert!(check_cap(5000, 5000).is_ok());
        assert!(matches!(
            check_cap(5001, 5000),
            Err(CliError::ResourceCap {
                requested: 5001,
                cap: 5000
            })
        ));
    }
}
