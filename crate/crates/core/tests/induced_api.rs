//! End-to-end use of the public API: fit an induced kernel, evaluate it on
//! fresh points, serialize it and score it downstream.

use proptest::prelude::*;
use ssl_kernel::downstream::{complexity_sn, svm_fit};
use ssl_kernel::graph::{group_adjacency, pairwise_adjacency, GroupMode};
use ssl_kernel::induced::{eval_induced, read_induced, write_induced, InducedKernel, SslConfig};
use ssl_kernel::kernels::{KernelSpec, Points};

fn points(coords: &[f64], dim: usize) -> Points {
    Points::new(coords.to_vec(), dim).unwrap()
}

fn config(contrastive: bool, beta: f64) -> SslConfig {
    if contrastive {
        SslConfig::contrastive()
    } else {
        SslConfig::noncontrastive(beta)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn induced_gram_on_fresh_points_is_psd(
        train in prop::collection::vec(-3.0f64..3.0, 16),
        fresh in prop::collection::vec(-3.0f64..3.0, 10),
        contrastive in any::<bool>(),
        beta in 0.0f64..1.0,
    ) {
        let pts = points(&train, 2);
        let a = pairwise_adjacency(4).unwrap();
        let ik = InducedKernel::fit(&KernelSpec::Rbf { sigma: 1.0 }, &pts, &a, &config(contrastive, beta)).unwrap();
        let g = ik.gram(&points(&fresh, 2)).unwrap();
        let m = g.matrix();
        prop_assert!((m - m.transpose()).abs().max() <= 1e-9 * m.abs().max().max(1.0));
        prop_assert!(g.is_psd().unwrap());
    }

    #[test]
    fn serialized_kernel_evaluates_identically(
        train in prop::collection::vec(-2.0f64..2.0, 12),
        x in prop::collection::vec(-2.0f64..2.0, 3),
        y in prop::collection::vec(-2.0f64..2.0, 3),
        contrastive in any::<bool>(),
    ) {
        let pts = points(&train, 3);
        let a = pairwise_adjacency(2).unwrap();
        let ik = InducedKernel::fit(&KernelSpec::Rbf { sigma: 1.2 }, &pts, &a, &config(contrastive, 0.3)).unwrap();
        let (mut bin, mut json) = (Vec::new(), Vec::new());
        write_induced(&ik, &mut bin, &mut json).unwrap();
        let back = read_induced(bin.as_slice(), json.as_slice()).unwrap();
        let before = eval_induced(&ik, &x, &y).unwrap();
        let after = eval_induced(&back, &x, &y).unwrap();
        prop_assert_eq!(before.to_bits(), after.to_bits());
    }
}

#[test]
fn group_kernel_separates_clusters_downstream() {
    // Three clusters of four points on a line; each cluster is one group.
    let coords: Vec<f64> = (0..12)
        .map(|i| (i / 4) as f64 * 3.0 + (i % 4) as f64 * 0.2)
        .collect();
    let pts = points(&coords, 1);
    let groups: Vec<Vec<usize>> = (0..3).map(|g| (4 * g..4 * g + 4).collect()).collect();
    let a = group_adjacency(12, &groups, GroupMode::Clique).unwrap();
    let ik = InducedKernel::fit(
        &KernelSpec::Rbf { sigma: 1.0 },
        &pts,
        &a,
        &SslConfig::contrastive(),
    )
    .unwrap();
    let k = ik.gram(&pts).unwrap();

    // (I + A)_+ for a clique of four is the all-ones block.
    for i in 0..12 {
        for j in 0..12 {
            let expected = if i / 4 == j / 4 { 1.0 } else { 0.0 };
            assert!((k.matrix()[(i, j)] - expected).abs() < 1e-6);
        }
    }
    let y: Vec<f64> = (0..12).map(|i| if i < 4 { 1.0 } else { -1.0 }).collect();
    let model = svm_fit(&k, &y, 10.0).unwrap();
    assert!(model.support_count() > 0);
    // Three ideal blocks: s_N is the block count, up to the default ridge.
    let sn = complexity_sn(&k, &y, None).unwrap();
    assert!((sn - 3.0).abs() < 1e-4, "s_N = {sn}");
}
