//! Minimal sparse machinery for the FEM eigensolver: CSR storage,
//! reverse Cuthill-McKee bandwidth reduction and an envelope (skyline)
//! LDL^T factorization for the shifted stiffness matrix.

use crate::error::{Error, Result};

/// Compressed sparse row matrix (square, f64).
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Csr {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut fill = counts.clone();
        for (idx, &(i, _, _)) in triplets.iter().enumerate() {
            order[fill[i]] = idx;
            fill[i] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(triplets.len());
        let mut val = Vec::with_capacity(triplets.len());
        for i in 0..n {
            let start = col.len();
            let mut row: Vec<(usize, f64)> = order[counts[i]..counts[i + 1]]
                .iter()
                .map(|&idx| (triplets[idx].1, triplets[idx].2))
                .collect();
            row.sort_unstable_by_key(|&(j, _)| j);
            for (j, v) in row {
                if col.len() > start && *col.last().unwrap() == j {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(j);
                    val.push(v);
                }
            }
            row_ptr[i + 1] = col.len();
        }
        Csr {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diag_sum(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col[k] == i {
                    s += self.val[k];
                }
            }
        }
        s
    }

    /// `a * self + b * other` over the union sparsity pattern.
    pub fn add_scaled(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!(self.n, other.n);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                triplets.push((i, self.col[k], a * self.val[k]));
            }
            for k in other.row_ptr[i]..other.row_ptr[i + 1] {
                triplets.push((i, other.col[k], b * other.val[k]));
            }
        }
        Csr::from_triplets(self.n, &triplets)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[k])] = self.val[k];
            }
        }
        m
    }

    /// Largest absolute asymmetry `|A_ij - A_ji|`; assembled operators
    /// must be symmetric to machine precision.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k];
                let aji = self.get(j, i);
                worst = worst.max((self.val[k] - aji).abs());
            }
        }
        worst
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col[k] == j {
                return self.val[k];
            }
        }
        0.0
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity pattern;
/// returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &Csr) -> Vec<usize> {
    let n = a.n;
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let degree = |i: usize| a.row_ptr[i + 1] - a.row_ptr[i];

    while order.len() < n {
        // peripheral-ish start: unvisited vertex of minimal degree
        let start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree(i))
            .unwrap();
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut nbrs: Vec<usize> = (a.row_ptr[i]..a.row_ptr[i + 1])
                .map(|k| a.col[k])
                .filter(|&j| !visited[j])
                .collect();
            nbrs.sort_unstable_by_key(|&j| (degree(j), j));
            for j in nbrs {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) LDL^T factorization of a symmetric matrix under a
/// fill-reducing permutation.  Solves against the original index order.
pub struct EnvelopeLdlt {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// iperm[old] = new
    iperm: Vec<usize>,
    /// first column of the stored envelope of each (permuted) row
    first: Vec<usize>,
    /// start of each row's strictly-lower envelope segment in `lval`
    row_start: Vec<usize>,
    /// packed rows of L (unit diagonal not stored)
    lval: Vec<f64>,
    diag: Vec<f64>,
}

impl EnvelopeLdlt {
    /// Factorizes `a` (symmetric positive definite).  Returns an error
    /// with the offending row if a pivot is non-positive.
    pub fn factor(a: &Csr) -> Result<EnvelopeLdlt> {
        let n = a.n;
        let perm = reverse_cuthill_mckee(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // envelope widths
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            *f = i;
        }
        for old_i in 0..n {
            let i = iperm[old_i];
            for k in a.row_ptr[old_i]..a.row_ptr[old_i + 1] {
                let j = iperm[a.col[k]];
                if j < i {
                    first[i] = first[i].min(j);
                } else if j > i {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut row_start = vec![0usize; n + 1];
        for i in 0..n {
            row_start[i + 1] = row_start[i] + (i - first[i]);
        }
        let mut lval = vec![0.0f64; row_start[n]];
        let mut diag = vec![0.0f64; n];

        // scatter A into the envelope
        for old_i in 0..n {
            let i = iperm[old_i];
            for k in a.row_ptr[old_i]..a.row_ptr[old_i + 1] {
                let j = iperm[a.col[k]];
                if j == i {
                    diag[i] = a.val[k];
                } else if j < i {
                    lval[row_start[i] + (j - first[i])] = a.val[k];
                }
            }
        }

        // in-place LDL^T on the envelope
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                // l_ij := (a_ij - sum_k l_ik d_k l_jk) / d_j
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = lval[row_start[i] + (j - fi)];
                for k in lo..j {
                    s -= lval[row_start[i] + (k - fi)] * diag[k] * lval[row_start[j] + (k - fj)];
                }
                lval[row_start[i] + (j - fi)] = s / diag[j];
            }
            let mut d = diag[i];
            for k in fi..i {
                let l = lval[row_start[i] + (k - fi)];
                d -= l * l * diag[k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::FactorizationBreakdown { row: i, pivot: d });
            }
            diag[i] = d;
        }

        Ok(EnvelopeLdlt {
            n,
            perm,
            iperm,
            first,
            row_start,
            lval,
            diag,
        })
    }

    /// Solves `A x = b` in the original index order.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0f64; n];
        for i in 0..n {
            y[i] = b[self.perm[i]];
        }
        // forward: L z = Pb
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.lval[self.row_start[i] + (k - fi)] * y[k];
            }
            y[i] = s;
        }
        // diagonal
        for i in 0..n {
            y[i] /= self.diag[i];
        }
        // backward: L^T w = z
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.lval[self.row_start[i] + (k - fi)] * yi;
            }
        }
        let mut x = vec![0.0f64; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored envelope size (diagnostic).
    pub fn envelope_nnz(&self) -> usize {
        self.lval.len()
    }

    /// Permuted bandwidth (diagnostic).
    pub fn bandwidth(&self) -> usize {
        (0..self.n).map(|i| i - self.first[i]).max().unwrap_or(0)
    }

    pub fn iperm(&self) -> &[usize] {
        &self.iperm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        Csr::from_triplets(n, &t)
    }

    #[test]
    fn csr_sums_duplicate_triplets() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 5.0), (1, 1, 1.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), 5.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = laplacian_1d(6);
        let d = a.to_dense();
        let x: Vec<f64> = (0..6).map(|i| (i as f64).sin() + 1.0).collect();
        let y = a.matvec_alloc(&x);
        let xd = nalgebra::DVector::from_vec(x);
        let yd = &d * &xd;
        for i in 0..6 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn ldlt_solves_spd_system() {
        let a = laplacian_1d(40);
        let f = EnvelopeLdlt::factor(&a).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (0.1 * i as f64).cos()).collect();
        let x = f.solve(&b);
        let r = a.matvec_alloc(&x);
        for i in 0..40 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn ldlt_random_spd_against_dense_solve() {
        // pentadiagonal SPD with varying entries
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 5.0 + (i as f64 * 0.37).sin().abs()));
            if i + 1 < n {
                let v = -1.0 + 0.1 * ((i * 7 % 5) as f64 - 2.0) * 0.1;
                t.push((i, i + 1, v));
                t.push((i + 1, i, v));
            }
            if i + 2 < n {
                t.push((i, i + 2, -0.3));
                t.push((i + 2, i, -0.3));
            }
        }
        let a = Csr::from_triplets(n, &t);
        let f = EnvelopeLdlt::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.01).sin()).collect();
        let x = f.solve(&b);
        let dense = a.to_dense();
        let xd = dense
            .lu()
            .solve(&nalgebra::DVector::from_vec(b.clone()))
            .unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-10, "mismatch at {i}");
        }
    }

    #[test]
    fn ldlt_rejects_indefinite() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(matches!(
            EnvelopeLdlt::factor(&a),
            Err(Error::FactorizationBreakdown { .. })
        ));
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_chain() {
        // chain graph with scrambled labels has large natural bandwidth
        let n = 50;
        let relabel = |i: usize| (i * 23) % n;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((relabel(i), relabel(i), 4.0));
            if i + 1 < n {
                t.push((relabel(i), relabel(i + 1), -1.0));
                t.push((relabel(i + 1), relabel(i), -1.0));
            }
        }
        let a = Csr::from_triplets(n, &t);
        let f = EnvelopeLdlt::factor(&a).unwrap();
        assert!(f.bandwidth() <= 4, "bandwidth {}", f.bandwidth());
        // and it still solves correctly
        let b = vec![1.0; n];
        let x = f.solve(&b);
        let r = a.matvec_alloc(&x);
        for i in 0..n {
            assert!((r[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn add_scaled_union_pattern() {
        let a = Csr::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0)]);
        let b = Csr::from_triplets(2, &[(0, 0, 10.0), (1, 1, 3.0)]);
        let c = a.add_scaled(2.0, &b, -1.0);
        assert_eq!(c.get(0, 0), -8.0);
        assert_eq!(c.get(0, 1), 4.0);
        assert_eq!(c.get(1, 1), -3.0);
    }
}
