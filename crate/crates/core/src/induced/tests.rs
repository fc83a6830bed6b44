use super::*;
use crate::graph::{group_adjacency, pairwise_adjacency, GroupMode};
use crate::kernels::psd_project;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(n: usize, d: usize, rng: &mut impl Rng) -> Points {
    Points::new((0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect(), d).unwrap()
}

fn pair_setup(n_pairs: usize, seed: u64) -> (KernelSpec, Points, Adjacency) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = KernelSpec::rbf(1.0).unwrap();
    (
        spec,
        random_points(2 * n_pairs, 3, &mut rng),
        pairwise_adjacency(n_pairs).unwrap(),
    )
}

#[test]
fn noncontrastive_two_points() {
    let g = GramMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0])).unwrap();
    let l = laplacian(&pairwise_adjacency(1).unwrap());
    let sol = fit_noncontrastive(&g, &l, &SslConfig::noncontrastive(0.0)).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
    assert!((sol.induced_gram(&g) - expected).abs().max() < 1e-12);
}

#[test]
fn noncontrastive_clamps_negative_directions() {
    // λ_max(L) = 2 for a pair, so β = 2 gives 1 - β = -1 on that direction.
    let g = GramMatrix::new(DMatrix::identity(4, 4)).unwrap();
    let l = laplacian(&pairwise_adjacency(2).unwrap());
    let sol = fit_noncontrastive(&g, &l, &SslConfig::noncontrastive(2.0)).unwrap();
    let target = noncontrastive_target(&l, 2.0);
    let gram = sol.induced_gram(&g);
    assert!((&gram - psd_project(&target).unwrap()).abs().max() < 1e-12);
    assert!(sol.target_values.iter().all(|&v| v >= 0.0));
    assert!(sym_eigen(&target).unwrap().values.iter().any(|&v| v < -0.5));
}

#[test]
fn contrastive_examples() {
    let (spec, xs, a) = pair_setup(4, 1);
    let ik = InducedKernel::fit(&spec, &xs, &a, &SslConfig::contrastive()).unwrap();
    let g = ik.gram(&xs).unwrap();
    assert!((g.matrix() - a.with_identity()).abs().max() < 1e-8);
    for (i, j) in a.edges() {
        let v = eval_induced(&ik, xs.row(i), xs.row(j)).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
        assert!((eval_induced(&ik, xs.row(i), xs.row(i)).unwrap() - 1.0).abs() < 1e-8);
    }

    // No augmentations: the SSL points are whitened.
    let none = Adjacency::empty(xs.len());
    let ik = InducedKernel::fit(&spec, &xs, &none, &SslConfig::contrastive()).unwrap();
    let eye = DMatrix::<f64>::identity(xs.len(), xs.len());
    assert!((ik.gram(&xs).unwrap().matrix() - eye).abs().max() < 1e-8);
}

#[test]
fn contrastive_rank_one_pair() {
    let (spec, xs, a) = pair_setup(1, 2);
    let cfg = SslConfig::contrastive().with_rep_dim(1);
    let ik = InducedKernel::fit(&spec, &xs, &a, &cfg).unwrap();
    let g = ik.gram(&xs).unwrap();
    assert!((g.matrix() - DMatrix::from_element(2, 2, 1.0)).abs().max() < 1e-8);
    let r0 = represent(&ik, xs.row(0)).unwrap();
    let r1 = represent(&ik, xs.row(1)).unwrap();
    assert_eq!(r0.len(), 1);
    assert!((r0[0].abs() - 1.0).abs() < 1e-8);
    assert!((r0[0] - r1[0]).abs() < 1e-8);
}

#[test]
fn representations_reproduce_kbk() {
    let (spec, xs, a) = pair_setup(5, 3);
    let g = gram(&spec, &xs).unwrap();
    let cfg = SslConfig::noncontrastive(0.4).with_rep_dim(6);
    let sol = fit(&g, &a, &cfg).unwrap();
    let kbk = g.matrix() * &sol.b * g.matrix();
    assert!((sol.induced_gram(&g) - &kbk).abs().max() < 1e-8);
    let mtm = sol.m.transpose() * &sol.m;
    assert!((&mtm - &sol.b).norm() <= 1e-8 * sol.b.norm());
    assert!(sol.rank() <= 6);
}

#[test]
fn padding_when_rank_is_short() {
    // Three pairs: I + A has rank 3, so K = 5 pads two zero coordinates.
    let (spec, xs, a) = pair_setup(3, 4);
    let ik = InducedKernel::fit(&spec, &xs, &a, &SslConfig::contrastive().with_rep_dim(5)).unwrap();
    assert_eq!(ik.rep_dim(), 5);
    assert_eq!(ik.solution().rank(), 3);
    let r = represent(&ik, &[0.2, -0.1, 0.4]).unwrap();
    assert_eq!(r.len(), 5);
    assert_eq!(r[3], 0.0);
    assert_eq!(r[4], 0.0);
}

#[test]
fn zero_representation_off_support() {
    // Far from every SSL point the RBF cross vector underflows to zero.
    let (spec, xs, a) = pair_setup(2, 5);
    let ik = InducedKernel::fit(&spec, &xs, &a, &SslConfig::contrastive()).unwrap();
    let r = represent(&ik, &[1e3, 1e3, 1e3]).unwrap();
    assert!(r.iter().all(|&v| v == 0.0));
}

#[test]
fn rejects_bad_inputs() {
    let (spec, xs, a) = pair_setup(2, 6);
    let g = gram(&spec, &xs).unwrap();
    assert!(fit_contrastive(&g, &a, &SslConfig::noncontrastive(0.1)).is_err());
    assert!(fit_contrastive(
        &g,
        &pairwise_adjacency(3).unwrap(),
        &SslConfig::contrastive()
    )
    .is_err());
    assert!(fit_contrastive(&g, &a, &SslConfig::contrastive().with_rep_dim(5)).is_err());
    assert!(fit_noncontrastive(&g, &laplacian(&a), &SslConfig::noncontrastive(-1.0)).is_err());

    let dup = Points::from_rows(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
    let gd = gram(&spec, &dup).unwrap();
    let strict = SslConfig::contrastive().with_ridge(0.0);
    assert!(matches!(
        fit_contrastive(&gd, &pairwise_adjacency(1).unwrap(), &strict),
        Err(Error::Singular(_))
    ));
    let auto = fit_contrastive(
        &gd,
        &pairwise_adjacency(1).unwrap(),
        &SslConfig::contrastive(),
    )
    .unwrap();
    assert!(auto.ridge > 0.0);
}

#[test]
fn loss_examples() {
    let a = pairwise_adjacency(3).unwrap();
    let l = laplacian(&a);
    let zero = DMatrix::zeros(6, 4);
    assert_eq!(loss_vic(&zero, &l, 0.7).unwrap(), 4.0);
    assert_eq!(loss_contrastive(&zero, &a).unwrap(), 12.0);

    // Centered, orthonormal columns.
    let s = 1.0 / 6f64.sqrt();
    let col1 = [0.5, 0.5, -0.5, -0.5, 0.0, 0.0];
    let z = DMatrix::from_fn(6, 2, |i, j| {
        if j == 0 {
            if i % 2 == 0 {
                s
            } else {
                -s
            }
        } else {
            col1[i]
        }
    });
    assert!(loss_vic(&z, &l, 0.0).unwrap() < 1e-24);

    let exact = DMatrix::from_fn(6, 3, |i, j| if i / 2 == j { 1.0 } else { 0.0 });
    assert!(loss_contrastive(&exact, &a).unwrap() < 1e-24);
}

fn brute_vic(z: &DMatrix<f64>, l: &DMatrix<f64>, beta: f64) -> f64 {
    let (n, k) = z.shape();
    let mut first = 0.0;
    for p in 0..k {
        for q in 0..k {
            let mut c = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let center = if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64;
                    c += z[(i, p)] * center * z[(j, q)];
                }
            }
            let t = c - if p == q { 1.0 } else { 0.0 };
            first += t * t;
        }
    }
    let mut inv = 0.0;
    for p in 0..k {
        for i in 0..n {
            for j in 0..n {
                inv += z[(i, p)] * l[(i, j)] * z[(j, p)];
            }
        }
    }
    first + beta * inv
}

fn brute_contrastive(z: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let (n, k) = z.shape();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..k).map(|p| z[(i, p)] * z[(j, p)]).sum();
            let t = dot - a[(i, j)] - if i == j { 1.0 } else { 0.0 };
            s += t * t;
        }
    }
    s
}

#[test]
fn losses_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = group_adjacency(7, &[vec![0, 3, 5], vec![1, 2]], GroupMode::Clique).unwrap();
    let l = laplacian(&a);
    for _ in 0..5 {
        let z = DMatrix::from_fn(7, 3, |_, _| rng.random_range(-1.0..1.0));
        let beta = rng.random_range(0.0..2.0);
        let v = loss_vic(&z, &l, beta).unwrap();
        assert!((v - brute_vic(&z, l.matrix(), beta)).abs() < 1e-10 * v.max(1.0));
        let c = loss_contrastive(&z, &a).unwrap();
        assert!((c - brute_contrastive(&z, a.matrix())).abs() < 1e-10 * c.max(1.0));
    }
}

#[test]
fn vic_and_equivalent_differ_by_constant_on_centered_z() {
    // For centered Z the two objectives differ by K - ‖T‖_F².
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = pairwise_adjacency(4).unwrap();
    let l = laplacian(&a);
    let beta = 0.3;
    let t = noncontrastive_target(&l, beta);
    for _ in 0..5 {
        let mut z = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..1.0));
        let mean = z.row_sum() / 8.0;
        for mut row in z.row_iter_mut() {
            row -= &mean;
        }
        let lhs = loss_vic(&z, &l, beta).unwrap();
        let rhs = loss_vic_equivalent(&z, &l, beta).unwrap() + 3.0 - t.norm_squared();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}

#[test]
fn closed_form_beats_random_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (spec, xs, a) = pair_setup(5, 10);
    let g = gram(&spec, &xs).unwrap();
    let l = laplacian(&a);
    for (cfg, is_vic) in [
        (SslConfig::contrastive().with_rep_dim(4), false),
        (SslConfig::noncontrastive(0.5).with_rep_dim(4), true),
    ] {
        let z = fit(&g, &a, &cfg).unwrap().representations(&g);
        let best = if is_vic {
            loss_vic(&z, &l, 0.5).unwrap()
        } else {
            loss_contrastive(&z, &a).unwrap()
        };
        for _ in 0..50 {
            let c = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
            let v = if is_vic {
                loss_vic(&c, &l, 0.5).unwrap()
            } else {
                loss_contrastive(&c, &a).unwrap()
            };
            assert!(best <= v + 1e-9);
        }
    }
}

#[test]
fn closeness_anchor_and_sampled() {
    let (spec, xs, a) = pair_setup(10, 11);
    let ik = InducedKernel::fit(&spec, &xs, &a, &SslConfig::contrastive()).unwrap();
    for (i, j) in a.edges() {
        assert!((eval_induced(&ik, xs.row(i), xs.row(j)).unwrap() - 1.0).abs() < 1e-8);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let report = check_closeness_bound(&ik, &a, 100, 0.5, &mut rng).unwrap();
    assert!(report.holds());
    assert!(report.min_value >= 0.5);
    assert!(report.rejected > 0);
    assert_eq!(report.trials, 100);

    let nc = InducedKernel::fit(&spec, &xs, &a, &SslConfig::noncontrastive(0.1)).unwrap();
    assert!(check_closeness_bound(&nc, &a, 10, 0.5, &mut rng).is_err());
    let lin = InducedKernel::fit(
        &KernelSpec::Linear,
        &xs,
        &a,
        &SslConfig::contrastive().with_ridge(1e-3),
    )
    .unwrap();
    assert!(check_closeness_bound(&lin, &a, 10, 0.5, &mut rng).is_err());
}

#[test]
fn serialization_round_trip_is_exact() {
    let (spec, xs, a) = pair_setup(3, 13);
    let cfg = SslConfig::noncontrastive(0.4)
        .with_rep_dim(4)
        .with_ridge(1e-9);
    let ik = InducedKernel::fit(&spec, &xs, &a, &cfg).unwrap();
    let mut bin = Vec::new();
    let mut json = Vec::new();
    write_induced(&ik, &mut bin, &mut json).unwrap();
    assert_eq!(&bin[..4], b"IKSL");
    let back = read_induced(&bin[..], &json[..]).unwrap();
    assert_eq!(back, ik);

    let mut bin2 = Vec::new();
    let mut json2 = Vec::new();
    write_induced(&back, &mut bin2, &mut json2).unwrap();
    assert_eq!(bin, bin2);
    assert_eq!(json, json2);

    assert!(read_induced(&bin[..bin.len() - 1], &json[..]).is_err());
    let mut bad = bin.clone();
    bad[0] = b'X';
    assert!(read_induced(&bad[..], &json[..]).is_err());
}

#[test]
fn config_json_forms() {
    let cfg: SslConfig =
        serde_json::from_str(r#"{"loss":"noncontrastive","beta":0.4,"rep_dim":"full"}"#).unwrap();
    assert_eq!(cfg, SslConfig::noncontrastive(0.4));
    let cfg: SslConfig =
        serde_json::from_str(r#"{"loss":"contrastive","rep_dim":16,"ridge":0.0}"#).unwrap();
    assert_eq!(
        cfg,
        SslConfig::contrastive().with_rep_dim(16).with_ridge(0.0)
    );
    assert!(
        serde_json::from_str::<SslConfig>(r#"{"loss":"contrastive","rep_dim":"half"}"#).is_err()
    );
}

#[test]
fn shared_solver_matches_fresh_fit() {
    let (spec, xs, a) = pair_setup(6, 21);
    let g = gram(&spec, &xs).unwrap();
    let solver = RegularizedSolver::new(&g, None).unwrap();
    for cfg in [
        SslConfig::contrastive(),
        SslConfig::contrastive().with_rep_dim(4),
        SslConfig::noncontrastive(0.4),
        SslConfig::noncontrastive(1.0).with_rep_dim(3),
    ] {
        assert_eq!(
            fit_with_solver(&solver, &a, &cfg).unwrap(),
            fit(&g, &a, &cfg).unwrap()
        );
    }
    let small = pairwise_adjacency(2).unwrap();
    assert!(fit_with_solver(&solver, &small, &SslConfig::contrastive()).is_err());
}

fn random_orthogonal(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn induced_kernel_invariants(seed in any::<u64>(), n_pairs in 2usize..6, k in 1usize..8, beta in 0.0f64..1.5, contrastive in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = KernelSpec::rbf(1.2).unwrap();
        let xs = random_points(2 * n_pairs, 2, &mut rng);
        let a = pairwise_adjacency(n_pairs).unwrap();
        let k = k.min(2 * n_pairs);
        let cfg = if contrastive { SslConfig::contrastive() } else { SslConfig::noncontrastive(beta) }.with_rep_dim(k);
        let ik = InducedKernel::fit(&spec, &xs, &a, &cfg).unwrap();

        let b = ik.coefficients();
        let beig = sym_eigen(b).unwrap();
        prop_assert!(beig.values[beig.dim() - 1] >= -1e-8 * beig.values[0].abs().max(1.0));
        let m = ik.factor();
        prop_assert!((m.transpose() * m - b).norm() <= 1e-8 * b.norm().max(1e-300));

        let queries = random_points(6, 2, &mut rng);
        let qg = ik.gram(&queries).unwrap();
        let qeig = sym_eigen(qg.matrix()).unwrap();
        prop_assert!(qeig.values[5] >= -1e-8);

        for i in 0..6 {
            for j in 0..6 {
                let xy = eval_induced(&ik, queries.row(i), queries.row(j)).unwrap();
                let yx = eval_induced(&ik, queries.row(j), queries.row(i)).unwrap();
                prop_assert_eq!(xy, yx);
                prop_assert!((xy - qg.matrix()[(i, j)]).abs() <= 1e-8);
            }
        }

        let q = random_orthogonal(k, &mut rng);
        let rot = ik.rotated(&q).unwrap();
        for i in 0..6 {
            let v = eval_induced(&ik, queries.row(i), queries.row((i + 1) % 6)).unwrap();
            let w = eval_induced(&rot, queries.row(i), queries.row((i + 1) % 6)).unwrap();
            prop_assert!((v - w).abs() <= 1e-10 * v.abs().max(1.0), "v={v} w={w}");
        }
    }

    #[test]
    fn truncation_is_monotone(seed in any::<u64>(), n_pairs in 2usize..6, beta in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = KernelSpec::rbf(1.0).unwrap();
        let xs = random_points(2 * n_pairs, 2, &mut rng);
        let a = pairwise_adjacency(n_pairs).unwrap();
        let g = gram(&spec, &xs).unwrap();
        for base in [SslConfig::contrastive(), SslConfig::noncontrastive(beta)] {
            let mut last = -1.0;
            for k in 1..=2 * n_pairs {
                let tr = fit(&g, &a, &base.clone().with_rep_dim(k)).unwrap().induced_gram(&g).trace();
                prop_assert!(tr >= last - 1e-9);
                last = tr;
            }
        }
    }
}
