//! Sparse symmetric storage, minimum-degree ordering and a left-looking
//! Cholesky factorization.

use std::collections::{BTreeMap, BTreeSet};

/// Lower triangle of a symmetric matrix, stored by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    cols: Vec<BTreeMap<usize, f64>>,
}

impl SparseSymmetric {
    pub fn new(n: usize) -> Self {
        Self { n, cols: vec![BTreeMap::new(); n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` to entry `(i, j)`; either triangle may be addressed.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        *self.cols[c].entry(r).or_insert(0.0) += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.cols[c].get(&r).copied().unwrap_or(0.0)
    }

    pub fn nonzeros(&self) -> usize {
        self.cols.iter().map(BTreeMap::len).sum()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (j, col) in self.cols.iter().enumerate() {
            for (&i, &v) in col {
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Off-diagonal sparsity pattern as adjacency sets.
    pub fn adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n];
        for (j, col) in self.cols.iter().enumerate() {
            for &i in col.keys() {
                if i != j {
                    adj[i].insert(j);
                    adj[j].insert(i);
                }
            }
        }
        adj
    }
}

/// Greedy minimum-degree elimination order on an undirected graph given as
/// adjacency sets. Ties go to the lowest index, so the order is deterministic.
pub fn minimum_degree_ordering(adjacency: &[BTreeSet<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<BTreeSet<usize>> = adjacency.to_vec();
    for (i, set) in adj.iter_mut().enumerate() {
        set.remove(&i);
    }
    let mut by_degree: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = by_degree.pop_first() {
        order.push(v);
        let neighbors: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
        for &a in &neighbors {
            by_degree.remove(&(adj[a].len(), a));
            adj[a].remove(&v);
        }
        for (k, &a) in neighbors.iter().enumerate() {
            for &b in &neighbors[k + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &neighbors {
            by_degree.insert((adj[a].len(), a));
        }
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot})")]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

/// `P A Pᵀ = L Lᵀ` with `L` stored by column.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    /// `order[k]` is the original index eliminated k-th.
    order: Vec<usize>,
    diag: Vec<f64>,
    /// Strictly-lower entries of each column, sorted by row (permuted indices).
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseCholesky {
    /// Factors `a` eliminating variables in `order` (a permutation of `0..n`).
    pub fn factor(a: &SparseSymmetric, order: &[usize]) -> Result<Self, NotPositiveDefinite> {
        let n = a.dim();
        assert_eq!(order.len(), n, "ordering length");
        let mut position = vec![usize::MAX; n];
        for (k, &o) in order.iter().enumerate() {
            position[o] = k;
        }

        // Permuted lower triangle, by column.
        let mut permuted: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (j, col) in a.cols.iter().enumerate() {
            for (&i, &v) in col {
                let (pi, pj) = (position[i], position[j]);
                let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                permuted[c].push((r, v));
            }
        }

        let mut diag = vec![0.0; n];
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut row_lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut acc = vec![0.0; n];
        let mut touched = vec![false; n];
        let mut pattern = Vec::new();

        for j in 0..n {
            acc[j] = 0.0;
            touched[j] = true;
            pattern.clear();
            for &(i, v) in &permuted[j] {
                if !touched[i] {
                    touched[i] = true;
                    acc[i] = 0.0;
                    pattern.push(i);
                }
                acc[i] += v;
            }
            for &k in &row_lists[j] {
                let col = &cols[k];
                let start = col.partition_point(|&(r, _)| r < j);
                let l_jk = col[start].1;
                acc[j] -= l_jk * l_jk;
                for &(i, v) in &col[start + 1..] {
                    if !touched[i] {
                        touched[i] = true;
                        acc[i] = 0.0;
                        pattern.push(i);
                    }
                    acc[i] -= v * l_jk;
                }
            }
            let d = acc[j];
            touched[j] = false;
            if !(d > 0.0) || !d.is_finite() {
                return Err(NotPositiveDefinite { pivot: order[j] });
            }
            let d = d.sqrt();
            diag[j] = d;
            pattern.sort_unstable();
            let mut col = Vec::with_capacity(pattern.len());
            for &i in &pattern {
                touched[i] = false;
                col.push((i, acc[i] / d));
                row_lists[i].push(j);
            }
            cols[j] = col;
        }
        Ok(Self { order: order.to_vec(), diag, cols })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Nonzeros of `L` including the diagonal.
    pub fn nonzeros(&self) -> usize {
        self.diag.len() + self.cols.iter().map(Vec::len).sum::<usize>()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.order.iter().map(|&o| b[o]).collect();
        for j in 0..n {
            y[j] /= self.diag[j];
            let yj = y[j];
            for &(i, v) in &self.cols[j] {
                y[i] -= v * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for &(i, v) in &self.cols[j] {
                s -= v * y[i];
            }
            y[j] = s / self.diag[j];
        }
        let mut x = vec![0.0; n];
        for (k, &o) in self.order.iter().enumerate() {
            x[o] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize, density: f64) -> (SparseSymmetric, DMatrix<f64>) {
        let mut s = SparseSymmetric::new(n);
        let mut d = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                if rng.random::<f64>() < density {
                    let v = rng.random_range(-1.0..1.0);
                    s.add(i, j, v);
                    d[(i, j)] += v;
                    d[(j, i)] += v;
                }
            }
        }
        // Diagonal dominance makes it positive definite.
        for i in 0..n {
            let row: f64 = (0..n).filter(|&j| j != i).map(|j| d[(i, j)].abs()).sum();
            let v = row + rng.random_range(0.1..2.0);
            s.add(i, i, v);
            d[(i, i)] = v;
        }
        (s, d)
    }

    #[test]
    fn matches_dense_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = rng.random_range(1..60);
            let (s, d) = random_spd(&mut rng, n, 0.1);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let expected = d.clone().cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
            for order in [(0..n).collect::<Vec<_>>(), minimum_degree_ordering(&s.adjacency())] {
                let x = SparseCholesky::factor(&s, &order).unwrap().solve(&b);
                for i in 0..n {
                    assert!((x[i] - expected[i]).abs() < 1e-9, "trial {trial}");
                }
            }
        }
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (s, d) = random_spd(&mut rng, 25, 0.2);
        let order = minimum_degree_ordering(&s.adjacency());
        let f = SparseCholesky::factor(&s, &order).unwrap();
        let n = 25;
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            l[(j, j)] = f.diag[j];
            for &(i, v) in &f.cols[j] {
                l[(i, j)] = v;
            }
        }
        let p = DMatrix::from_fn(n, n, |r, c| if order[r] == c { 1.0 } else { 0.0 });
        let back = p.transpose() * &l * l.transpose() * &p;
        assert!((back - d).abs().max() < 1e-12);
    }

    #[test]
    fn arrow_matrix_has_no_fill_with_minimum_degree() {
        // Hub 0 coupled to every leaf: eliminating the hub first fills everything.
        let n = 30;
        let mut s = SparseSymmetric::new(n);
        for i in 0..n {
            s.add(i, i, n as f64);
            if i > 0 {
                s.add(i, 0, 1.0);
            }
        }
        let natural = SparseCholesky::factor(&s, &(0..n).collect::<Vec<_>>()).unwrap();
        let order = minimum_degree_ordering(&s.adjacency());
        assert!(order[n - 2..].contains(&0));
        let md = SparseCholesky::factor(&s, &order).unwrap();
        assert_eq!(md.nonzeros(), 2 * n - 1);
        assert!(natural.nonzeros() > md.nonzeros());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut s = SparseSymmetric::new(3);
        s.add(0, 0, 1.0);
        s.add(1, 1, -2.0);
        s.add(2, 2, 1.0);
        s.add(1, 0, 0.1);
        assert!(SparseCholesky::factor(&s, &[0, 1, 2]).is_err());
    }

    #[test]
    fn mul_vec_uses_both_triangles() {
        let mut s = SparseSymmetric::new(2);
        s.add(0, 0, 2.0);
        s.add(0, 1, 1.0);
        s.add(1, 1, 3.0);
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(s.mul_vec(&[1.0, 1.0]), vec![3.0, 4.0]);
    }
}
