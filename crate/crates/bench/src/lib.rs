//! Deterministic inputs shared by the benchmarks.

use nalgebra::DMatrix;
use ssl_kernel::graph::{pairwise_adjacency, Adjacency};
use ssl_kernel::kernels::{gram, GramMatrix, KernelSpec, Points};

/// `n` points in `dim` dimensions from a fixed low-discrepancy sequence.
pub fn points(n: usize, dim: usize) -> Points {
    let data = (0..n * dim)
        .map(|i| ((i as f64 * 0.754_877_666).fract() - 0.5) * 4.0)
        .collect();
    Points::new(data, dim).expect("dimension divides length")
}

/// RBF Gram over `2 * n_pairs` points where `2i` and `2i + 1` are close,
/// with the matching pair adjacency.
pub fn paired_problem(n_pairs: usize, dim: usize) -> (GramMatrix, Adjacency) {
    let base = points(n_pairs, dim);
    let mut data = Vec::with_capacity(2 * n_pairs * dim);
    for i in 0..n_pairs {
        let p = base.row(i);
        data.extend_from_slice(p);
        data.extend(
            p.iter()
                .enumerate()
                .map(|(d, v)| v + 0.05 * ((i + d) as f64).sin()),
        );
    }
    let pts = Points::new(data, dim).expect("dimension divides length");
    let g = gram(&KernelSpec::Rbf { sigma: 1.0 }, &pts).expect("valid spec");
    (g, pairwise_adjacency(n_pairs).expect("nonzero pairs"))
}

/// Symmetric test matrix with a spread spectrum.
pub fn symmetric(n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5);
    (&a + a.transpose()) * 0.5
}
