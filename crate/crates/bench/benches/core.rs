use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ssl_kernel::downstream::svm_fit;
use ssl_kernel::induced::{fit, SslConfig};
use ssl_kernel::kernels::{gram, sym_eigen, sym_eigenvalues, KernelSpec};
use ssl_kernel::sdp::{batch_targets, make_batches, solve_sdp, BatchPlan, SdpOptions};
use ssl_kernel_bench::{paired_problem, points, symmetric};

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram_rbf");
    for n in [200, 800] {
        let pts = points(n, 784);
        let spec = KernelSpec::Rbf { sigma: 7.0 };
        group.bench_with_input(BenchmarkId::from_parameter(n), &pts, |b, pts| {
            b.iter(|| gram(&spec, pts).unwrap())
        });
    }
    group.finish();
}

fn bench_eigen(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigen");
    group.sample_size(10);
    for n in [100, 400] {
        let m = symmetric(n);
        group.bench_with_input(BenchmarkId::new("vectors", n), &m, |b, m| {
            b.iter(|| sym_eigen(m).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("values", n), &m, |b, m| {
            b.iter(|| sym_eigenvalues(m).unwrap())
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("induced_fit");
    group.sample_size(10);
    for n_pairs in [50, 200] {
        let (g, a) = paired_problem(n_pairs, 3);
        group.bench_function(BenchmarkId::new("contrastive", 2 * n_pairs), |b| {
            b.iter(|| fit(&g, &a, &SslConfig::contrastive()).unwrap())
        });
        group.bench_function(BenchmarkId::new("noncontrastive", 2 * n_pairs), |b| {
            b.iter(|| fit(&g, &a, &SslConfig::noncontrastive(0.4)).unwrap())
        });
    }
    group.finish();
}

fn bench_svm(c: &mut Criterion) {
    let (g, _) = paired_problem(200, 3);
    let labels: Vec<f64> = (0..g.n())
        .map(|i| {
            if points(g.n(), 3).row(i)[0] > 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    c.bench_function("svm_smo_400", |b| {
        b.iter(|| svm_fit(&g, &labels, 10.0).unwrap())
    });
}

fn bench_sdp(c: &mut Criterion) {
    let (g, a) = paired_problem(20, 3);
    let cfg = SslConfig::contrastive();
    let mut group = c.benchmark_group("sdp_40");
    group.sample_size(10);
    for (name, batches) in [
        ("single", vec![(0..40).collect::<Vec<_>>()]),
        ("batched", make_batches(40, 10, 0).unwrap()),
    ] {
        let plan = BatchPlan::new(batches, &a).unwrap();
        let targets = batch_targets(&plan, &cfg).unwrap();
        group.bench_function(name, |b| {
            b.iter(|| solve_sdp(&g, &plan, &targets, &SdpOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_gram,
    bench_eigen,
    bench_fit,
    bench_svm,
    bench_sdp
);
criterion_main!(benches);
