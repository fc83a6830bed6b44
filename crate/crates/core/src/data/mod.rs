//! Datasets: the two-spiral toy set, IDX image files, image augmentations and
//! assembly of SSL datasets with their augmentation graph.

mod augment;
pub mod idx;

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{
    affine_transform, augment, gaussian_blur, AugmentationKind, AugmentationSpec, SIDE,
};
pub use idx::{load_idx, save_idx, IdxSet};

use crate::error::{Error, Result};
use crate::graph::{group_adjacency, Adjacency, GroupMode};
use crate::kernels::Points;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub points: Points,
    pub labels: Vec<usize>,
    pub source: String,
}

impl LabeledDataset {
    pub fn new(points: Points, labels: Vec<usize>, source: impl Into<String>) -> Result<Self> {
        crate::error::ensure_dim(points.len(), labels.len())?;
        Ok(LabeledDataset {
            points,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Result<LabeledDataset> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                size: self.len(),
            });
        }
        Ok(LabeledDataset {
            points: self.points.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source: self.source.clone(),
        })
    }

    /// Draws `n` distinct items uniformly, in draw order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        self.select(&sample_indices(self.len(), n, seed)?)
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }
}

fn sample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {n} items from {len} available"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, len, n).into_vec())
}

/// Parameter range of the spiral arms, in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for SpiralParams {
    fn default() -> Self {
        SpiralParams {
            t_min: 1.5 * PI,
            t_max: 4.5 * PI,
        }
    }
}

pub fn spiral(n_per_arm: usize, seed: u64) -> Result<LabeledDataset> {
    spiral_with(SpiralParams::default(), n_per_arm, seed)
}

/// Two Archimedean arms `(t cos t, t sin t)` and its rotation by π, sharing the
/// same uniform draws of `t`. Arm 0 comes first, labelled 0.
pub fn spiral_with(params: SpiralParams, n_per_arm: usize, seed: u64) -> Result<LabeledDataset> {
    if n_per_arm < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_per_arm must be at least 2, got {n_per_arm}"
        )));
    }
    let SpiralParams { t_min, t_max } = params;
    if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
        return Err(Error::InvalidParameter(format!(
            "bad spiral range [{t_min}, {t_max}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ts: Vec<f64> = (0..n_per_arm)
        .map(|_| rng.random_range(t_min..t_max))
        .collect();
    let mut data = Vec::with_capacity(4 * n_per_arm);
    for sign in [1.0, -1.0] {
        for &t in &ts {
            data.push(sign * t * t.cos());
            data.push(sign * t * t.sin());
        }
    }
    let labels = (0..2 * n_per_arm).map(|i| i / n_per_arm).collect();
    LabeledDataset::new(Points::new(data, 2)?, labels, "spiral")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SslDataset {
    /// Each original is followed by its augmentations.
    pub points: Points,
    /// Labels carried over from the originals.
    pub labels: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub adjacency: Adjacency,
}

impl SslDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn originals(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g[0]).collect()
    }
}

/// Augments every image `spec.n_aug` times. Original `i` draws from its own
/// ChaCha stream, so the result does not depend on thread scheduling.
pub fn build_ssl(
    dataset: &LabeledDataset,
    spec: &AugmentationSpec,
    mode: GroupMode,
) -> Result<SslDataset> {
    spec.validate()?;
    let group_size = spec.n_aug + 1;
    let blocks = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let image = dataset.points.row(i);
            let mut block = image.to_vec();
            for _ in 0..spec.n_aug {
                block.extend(augment(image, &spec.kind, &mut rng)?);
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = dataset.len() * group_size;
    let points = Points::new(blocks.concat(), SIDE * SIDE)?;
    let labels = dataset
        .labels
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, group_size))
        .collect();
    let groups: Vec<Vec<usize>> = (0..dataset.len())
        .map(|i| (i * group_size..(i + 1) * group_size).collect())
        .collect();
    let adjacency = group_adjacency(n, &groups, mode)?;
    Ok(SslDataset {
        points,
        labels,
        groups,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn tiny_images(n: usize) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = (0..n * SIDE * SIDE).map(|_| rng.random::<f64>()).collect();
        LabeledDataset::new(
            Points::new(data, SIDE * SIDE).unwrap(),
            (0..n).map(|i| i % 3).collect(),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn spiral_examples() {
        let ds = spiral(100, 0).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 100);
        for i in 0..100 {
            let (a, b) = (ds.points.row(i), ds.points.row(i + 100));
            assert_eq!(a[0], -b[0]);
            assert_eq!(a[1], -b[1]);
            let r = a[0].hypot(a[1]);
            assert!((1.5 * PI..=4.5 * PI).contains(&r));
        }
        assert!(spiral(1, 0).is_err());
        assert!(spiral_with(
            SpiralParams {
                t_min: 2.0,
                t_max: 1.0
            },
            5,
            0
        )
        .is_err());
        assert_eq!(spiral(10, 4).unwrap(), spiral(10, 4).unwrap());
    }

    #[test]
    fn dataset_selection() {
        let ds = tiny_images(6);
        let sub = ds.select(&[4, 1]).unwrap();
        assert_eq!(sub.labels, vec![1, 1]);
        assert_eq!(sub.points.row(0), ds.points.row(4));
        assert!(ds.select(&[6]).is_err());
        assert!(ds.sample(7, 0).is_err());
        let s = ds.sample(6, 3).unwrap();
        let mut labels = s.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 0, 1, 1, 2, 2]);
        assert!(LabeledDataset::new(Points::empty(2), vec![0], "x").is_err());
        assert_eq!(ds.num_classes(), 3);
    }

    #[test]
    fn build_ssl_examples() {
        let ds = tiny_images(3);
        let spec = AugmentationSpec {
            kind: AugmentationKind::affine(),
            n_aug: 1,
            seed: 5,
        };
        let ssl = build_ssl(&ds, &spec, GroupMode::Star).unwrap();
        assert_eq!(ssl.len(), 6);
        assert_eq!(ssl.groups, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        assert_eq!(ssl.originals(), vec![0, 2, 4]);
        assert_eq!(ssl.labels, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(ssl.points.row(2), ds.points.row(1));
        let a = ssl.adjacency.matrix();
        for i in 0..6 {
            for j in 0..6 {
                let linked = i != j && i / 2 == j / 2;
                assert_eq!(a[(i, j)], if linked { 1.0 } else { 0.0 });
            }
        }

        let spec = AugmentationSpec { n_aug: 4, ..spec };
        let ssl = build_ssl(&ds, &spec, GroupMode::Clique).unwrap();
        assert_eq!(ssl.len(), 15);
        assert_eq!(ssl, build_ssl(&ds, &spec, GroupMode::Clique).unwrap());
    }

    #[test]
    fn build_ssl_rejects_bad_spec() {
        let ds = tiny_images(2);
        let spec = AugmentationSpec {
            kind: AugmentationKind::GaussianBlur { sigma: -1.0 },
            n_aug: 2,
            seed: 0,
        };
        assert!(build_ssl(&ds, &spec, GroupMode::Clique).is_err());
    }

    #[test]
    fn official_test_set() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
        if !dir.join("t10k-labels-idx1-ubyte.gz").exists() {
            eprintln!("skipping: no MNIST files in {}", dir.display());
            return;
        }
        let ds = load_idx(
            &dir.join("t10k-images-idx3-ubyte.gz"),
            &dir.join("t10k-labels-idx1-ubyte.gz"),
        )
        .unwrap();
        assert_eq!(ds.len(), 10000);
        assert_eq!(ds.labels[..5], [7, 2, 1, 0, 4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn spiral_is_balanced_and_symmetric(n in 2usize..60, seed in any::<u64>()) {
            let ds = spiral(n, seed).unwrap();
            prop_assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), n);
            for i in 0..n {
                prop_assert_eq!(ds.points.row(i)[0], -ds.points.row(n + i)[0]);
            }
        }
    }
}
