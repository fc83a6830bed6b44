//! Augmentation graphs: adjacency matrices and combinatorial Laplacians.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{asymmetry, GramMatrix};

/// How the points inside one augmentation group are connected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupMode {
    /// The first index (the original) is linked to every other member.
    Star,
    /// Every pair within the group is linked.
    #[default]
    Clique,
}

/// Symmetric, nonnegative, zero-diagonal relation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency(DMatrix<f64>);

impl Adjacency {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare(m.nrows(), m.ncols()));
        }
        let asym = asymmetry(&m);
        if asym != 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        for i in 0..m.nrows() {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "adjacency has a self-loop at {i}"
                )));
            }
        }
        if m.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "adjacency entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(m))
    }

    pub fn empty(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Builds a 0/1 adjacency from undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            for idx in [i, j] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        size: n,
                    });
                }
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at {i}")));
            }
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Upper-triangle edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.0[(i, j)] != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// `I + A`.
    pub fn with_identity(&self) -> DMatrix<f64> {
        &self.0 + DMatrix::identity(self.n(), self.n())
    }

    /// Principal submatrix on `indices`.
    pub fn select(&self, indices: &[usize]) -> Adjacency {
        Adjacency(self.0.select_rows(indices).select_columns(indices))
    }

    /// Connected components, each sorted ascending, ordered by smallest
    /// member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for (v, lv) in label.iter_mut().enumerate() {
                    if *lv == usize::MAX && self.0[(u, v)] != 0.0 {
                        *lv = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }
}

/// `L = D_A - A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian(DMatrix<f64>);

impl Laplacian {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `xᵀ L x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(x);
        v.dot(&(&self.0 * &v))
    }
}

/// `n_pairs` disjoint augmentation pairs `(2i, 2i+1)`.
pub fn pairwise_adjacency(n_pairs: usize) -> Result<Adjacency> {
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("need at least one pair".into()));
    }
    let edges: Vec<_> = (0..n_pairs).map(|p| (2 * p, 2 * p + 1)).collect();
    Adjacency::from_edges(2 * n_pairs, &edges)
}

/// Links points within each group; indices not in any group stay isolated.
pub fn group_adjacency(n: usize, groups: &[Vec<usize>], mode: GroupMode) -> Result<Adjacency> {
    let mut seen = vec![false; n];
    let mut edges = Vec::new();
    for g in groups {
        for &i in g {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, size: n });
            }
            if seen[i] {
                return Err(Error::OverlappingGroups(i));
            }
            seen[i] = true;
        }
        match mode {
            GroupMode::Star => {
                if let Some((&root, rest)) = g.split_first() {
                    edges.extend(rest.iter().map(|&j| (root, j)));
                }
            }
            GroupMode::Clique => {
                for (a, &i) in g.iter().enumerate() {
                    edges.extend(g[a + 1..].iter().map(|&j| (i, j)));
                }
            }
        }
    }
    Adjacency::from_edges(n, &edges)
}

/// `A_ij = 1` iff `i != j` and `G_ij > d`.
pub fn neighborhood_adjacency(g: &GramMatrix, d: f64) -> Adjacency {
    let n = g.n();
    let m = g.matrix();
    Adjacency(DMatrix::from_fn(n, n, |i, j| {
        if i != j && m[(i, j)] > d {
            1.0
        } else {
            0.0
        }
    }))
}

pub fn laplacian(a: &Adjacency) -> Laplacian {
    let n = a.n();
    let mut l = -a.0.clone();
    for i in 0..n {
        l[(i, i)] = a.0.row(i).sum();
    }
    Laplacian(l)
}

/// Writes `i,j` lines (0-based, `i < j`) preceded by an `i,j` header.
pub fn write_edge_list<W: Write>(a: &Adjacency, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j"])?;
    for (i, j) in a.edges() {
        w.write_record([i.to_string(), j.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an edge list; a non-numeric first line is treated as a header.
pub fn read_edge_list<R: Read>(n: usize, input: R) -> Result<Adjacency> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut edges = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format(format!(
                "edge line {line}: expected 2 fields"
            )));
        }
        let parsed: std::result::Result<Vec<usize>, _> = rec.iter().map(str::parse).collect();
        match parsed {
            Ok(v) => edges.push((v[0], v[1])),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Format(format!("edge line {line}: {e}"))),
        }
    }
    Adjacency::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, sym_eigen, KernelSpec, Points};
    use proptest::prelude::*;

    #[test]
    fn pairwise_examples() {
        let a = pairwise_adjacency(1).unwrap();
        assert_eq!(
            a.matrix(),
            &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        let a = pairwise_adjacency(2).unwrap();
        assert_eq!(a.edges(), vec![(0, 1), (2, 3)]);
        let a = pairwise_adjacency(10).unwrap();
        assert!(a.matrix().row_iter().all(|r| r.sum() == 1.0));
        assert!(pairwise_adjacency(0).is_err());
    }

    #[test]
    fn pairwise_spectrum() {
        let a = pairwise_adjacency(6).unwrap();
        let eig = sym_eigen(&a.with_identity()).unwrap();
        for v in eig.values.iter() {
            assert!(v.abs() < 1e-12 || (v - 2.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn group_examples() {
        for mode in [GroupMode::Star, GroupMode::Clique] {
            assert_eq!(
                group_adjacency(2, &[vec![0, 1]], mode).unwrap(),
                pairwise_adjacency(1).unwrap()
            );
        }
        let c = group_adjacency(3, &[vec![0, 1, 2]], GroupMode::Clique).unwrap();
        assert_eq!(
            c.matrix(),
            &(DMatrix::from_element(3, 3, 1.0) - DMatrix::identity(3, 3))
        );
        let s = group_adjacency(3, &[vec![0, 1, 2]], GroupMode::Star).unwrap();
        assert_eq!(s.edges(), vec![(0, 1), (0, 2)]);

        assert!(matches!(
            group_adjacency(4, &[vec![0, 1], vec![1, 2]], GroupMode::Clique),
            Err(Error::OverlappingGroups(1))
        ));
        assert!(matches!(
            group_adjacency(2, &[vec![0, 5]], GroupMode::Star),
            Err(Error::IndexOutOfRange { index: 5, size: 2 })
        ));
    }

    #[test]
    fn neighborhood_examples() {
        let xs = Points::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let g = gram(&KernelSpec::rbf(1.0).unwrap(), &xs).unwrap();
        let first = (-0.5f64).exp();
        let second = (-2.0f64).exp();

        let path = neighborhood_adjacency(&g, 0.5 * (first + second));
        assert_eq!(path.edges(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(neighborhood_adjacency(&g, first).edge_count(), 0);
        assert_eq!(neighborhood_adjacency(&g, 0.0).edge_count(), 6);
    }

    #[test]
    fn laplacian_examples() {
        let l = laplacian(&pairwise_adjacency(1).unwrap());
        assert_eq!(
            l.matrix(),
            &DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        let z = laplacian(&Adjacency::empty(3));
        assert_eq!(z.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn components_of_groups() {
        let a = group_adjacency(7, &[vec![0, 3], vec![1, 4, 5]], GroupMode::Star).unwrap();
        assert_eq!(
            a.components(),
            vec![vec![0, 3], vec![1, 4, 5], vec![2], vec![6]]
        );
    }

    #[test]
    fn edge_list_round_trip() {
        let a = group_adjacency(6, &[vec![0, 2, 4], vec![1, 5]], GroupMode::Clique).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&a, &mut buf).unwrap();
        assert!(buf.starts_with(b"i,j\n0,2\n"));
        assert_eq!(read_edge_list(6, &buf[..]).unwrap(), a);
        assert_eq!(
            read_edge_list(3, &b"0,1\n1,2\n"[..]).unwrap().edge_count(),
            2
        );
        assert!(read_edge_list(3, &b"0,1\n1,x\n"[..]).is_err());
        assert!(read_edge_list(3, &b"0,7\n"[..]).is_err());
    }

    fn random_adjacency() -> impl Strategy<Value = Adjacency> {
        (2usize..12).prop_flat_map(|n| {
            prop::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
                let mut edges = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        if bits[k] {
                            edges.push((i, j));
                        }
                        k += 1;
                    }
                }
                Adjacency::from_edges(n, &edges).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn laplacian_properties(a in random_adjacency(), seed in any::<u64>()) {
            let l = laplacian(&a);
            let n = a.n();
            let ones = nalgebra::DVector::from_element(n, 1.0);
            prop_assert!((l.matrix() * ones).norm() <= 1e-10 * n as f64);
            let eig = sym_eigen(l.matrix()).unwrap();
            prop_assert!(eig.values[n - 1] >= -1e-10);

            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut brute = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        brute += a.matrix()[(i, j)] * (x[i] - x[j]).powi(2);
                    }
                }
                prop_assert!((l.quadratic_form(&x) - 0.5 * brute).abs() <= 1e-10);
            }
        }

        #[test]
        fn neighborhood_is_monotone(xs in prop::collection::vec([-3.0f64..3.0, -3.0f64..3.0], 2..12), d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
            let pts = Points::from_rows(&xs).unwrap();
            let g = gram(&KernelSpec::rbf(1.0).unwrap(), &pts).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a_lo = neighborhood_adjacency(&g, lo);
            let a_hi = neighborhood_adjacency(&g, hi);
            for (i, j) in a_hi.edges() {
                prop_assert_eq!(a_lo.matrix()[(i, j)], 1.0);
            }
        }
    }
}
