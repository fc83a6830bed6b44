//! Shared steps of the image experiments: sampling, augmentation, Gram
//! matrices and downstream scoring.

use std::path::Path;

use ssl_kernel::data::{
    build_ssl, AugmentationKind, AugmentationSpec, IdxSet, LabeledDataset, SslDataset,
};
use ssl_kernel::downstream::{accuracy, complexity_sn, even_odd_labels, fit_ovr_svm, ovr_classify};
use ssl_kernel::graph::GroupMode;
use ssl_kernel::induced::InducedSolution;
use ssl_kernel::kernels::{cross, gram, CrossMatrix, GramMatrix, KernelSpec};

use crate::config::Config;
use crate::error::{CliError, Result};

/// Independent sub-seeds derived from one run seed (splitmix64 finalizer).
pub fn seed_for(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_ORIGINALS: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_AUGMENT: u64 = 3;

fn open_idx(images: &Path, labels: &Path) -> Result<IdxSet> {
    IdxSet::open(images, labels).map_err(|e| match e {
        ssl_kernel::Error::Io(io) => {
            let missing = if images.exists() { labels } else { images };
            CliError::io(missing, io)
        }
        other => other.into(),
    })
}

pub struct Sources {
    pub train: IdxSet,
    pub test: IdxSet,
}

impl Sources {
    pub fn open(cfg: &Config) -> Result<Self> {
        let (ti, tl) = cfg.dataset.train_paths();
        let (ei, el) = cfg.dataset.test_paths();
        Ok(Sources {
            train: open_idx(&ti, &tl)?,
            test: open_idx(&ei, &el)?,
        })
    }
}

/// One sampled problem: SSL points, test points and the base-kernel matrices.
pub struct Prepared {
    pub ssl: SslDataset,
    pub test: LabeledDataset,
    /// Base Gram over the SSL points.
    pub gram: GramMatrix,
    /// Base kernel, SSL points by test points.
    pub test_cross: CrossMatrix,
}

impl Prepared {
    pub fn originals(&self) -> Vec<usize> {
        self.ssl.originals()
    }
}

pub struct Sample<'a> {
    pub n_originals: usize,
    pub n_aug: usize,
    pub augmentation: &'a AugmentationKind,
    pub adjacency: GroupMode,
    pub n_test: usize,
    pub seed: u64,
}

pub fn prepare(sources: &Sources, spec: &KernelSpec, s: &Sample) -> Result<Prepared> {
    let originals = sources
        .train
        .sample(s.n_originals, seed_for(s.seed, STREAM_ORIGINALS))?;
    let test = sources
        .test
        .sample(s.n_test, seed_for(s.seed, STREAM_TEST))?;
    let aug = AugmentationSpec {
        kind: s.augmentation.clone(),
        n_aug: s.n_aug,
        seed: seed_for(s.seed, STREAM_AUGMENT),
    };
    let ssl = build_ssl(&originals, &aug, s.adjacency)?;
    let gram = gram(spec, &ssl.points)?;
    let test_cross = cross(spec, &ssl.points, &test.points)?;
    Ok(Prepared {
        ssl,
        test,
        gram,
        test_cross,
    })
}

/// Induced Gram over the SSL points and induced cross matrix to the test
/// points, through the representations `M k_{s,x}`.
pub fn induced_view(
    sol: &InducedSolution,
    gram: &GramMatrix,
    test_cross: &CrossMatrix,
) -> Result<(GramMatrix, CrossMatrix)> {
    let live: Vec<usize> = (0..sol.rep_dim())
        .filter(|&i| sol.target_values[i] > 0.0)
        .collect();
    let m = sol.m.select_rows(&live);
    let z_s = &m * gram.matrix();
    let z_t = &m * test_cross.matrix();
    let mut g = z_s.tr_mul(&z_s);
    // Average out roundoff asymmetry from the product.
    let gt = g.transpose();
    g += gt;
    g *= 0.5;
    Ok((GramMatrix::new(g)?, CrossMatrix::new(z_s.tr_mul(&z_t))?))
}

/// One-vs-rest SVM accuracy on the test points. Only classes present in
/// `labels` get a model; small samples may miss some digits.
pub fn svm_accuracy(
    k: &GramMatrix,
    labels: &[usize],
    k_query: &CrossMatrix,
    truth: &[usize],
    c: f64,
) -> Result<f64> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let compact: Vec<usize> = labels
        .iter()
        .map(|l| {
            classes
                .binary_search(l)
                .expect("label is in its own class list")
        })
        .collect();
    let models = fit_ovr_svm(k, &compact, classes.len(), c)?;
    let predicted: Vec<usize> = ovr_classify(&models, k_query)?
        .into_iter()
        .map(|i| classes[i])
        .collect();
    Ok(accuracy(&predicted, truth)?)
}

/// `s_N` for the even/odd split of the labels.
pub fn sn_even_odd(k: &GramMatrix, labels: &[usize]) -> Result<f64> {
    Ok(complexity_sn(k, &even_odd_labels(labels), None)?)
}

/// Runs `f` on a pool with `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
