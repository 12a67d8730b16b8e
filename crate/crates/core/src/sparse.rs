//! Minimal sparse kernels for the assembly pipeline: CSR storage, products,
//! and a banded Cholesky solver with reverse Cuthill-McKee reordering.

use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite (pivot {pivot} at column {col})")]
    NotPositiveDefinite { col: usize, pivot: f64 },
}

/// Compressed sparse row matrix with full (not triangular) storage.
#[derive(Debug, Clone)]
pub struct CsrMatrix<S: Real> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<S>,
}

impl<S: Real> CsrMatrix<S> {
    /// Builds from unordered triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, S)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<S> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[S]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn mul_vec(&self, x: &DVector<S>) -> DVector<S> {
        assert_eq!(self.ncols, x.len());
        let mut y = DVector::zeros(self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = S::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, triplets)
    }

    /// Sparse-sparse product `self * other` via row expansion.
    pub fn mul_csr(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        let mut scratch: Vec<S> = vec![S::zero(); other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&k, &v) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &ov) in ocols.iter().zip(ovals) {
                    if scratch[c] == S::zero() {
                        touched.push(c);
                    }
                    scratch[c] += v * ov;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                triplets.push((r, c, scratch[c]));
                scratch[c] = S::zero();
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, triplets)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for r in 0..m.nrows {
                let (cols, vals) = m.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    triplets.push((r, c, v));
                }
            }
        }
        Self::from_triplets(self.nrows, self.ncols, triplets)
    }

    pub fn scale(&self, factor: S) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// Symmetric submatrix on the kept indices (order preserved).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut inv = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            inv[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_r);
            for (&c, &v) in cols.iter().zip(vals) {
                if inv[c] != usize::MAX {
                    triplets.push((new_r, inv[c], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), triplets)
    }

    pub fn to_dense(&self) -> DMatrix<S> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Max absolute entry difference, for comparing assembly routes.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        let diff = self.add(&other.scale(-S::one()));
        diff.values
            .iter()
            .fold(S::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee<S: Real>(m: &CsrMatrix<S>) -> Vec<usize> {
    let n = m.nrows;
    let degree = |v: usize| m.row_ptr[v + 1] - m.row_ptr[v];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        let Some(start) = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree(v), v))
        else {
            break;
        };
        visited[start] = true;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let (cols, _) = m.row(v);
            let mut nbrs: Vec<usize> = cols.iter().copied().filter(|&c| !visited[c]).collect();
            nbrs.sort_unstable_by_key(|&c| (degree(c), c));
            for c in nbrs {
                visited[c] = true;
                queue.push_back(c);
            }
        }
    }
    order.reverse();
    order
}

/// Symmetric positive definite solver: RCM reordering plus banded Cholesky
/// with one step of iterative refinement.
pub struct BandedCholesky<S: Real> {
    n: usize,
    bandwidth: usize,
    /// Column-major band storage: entry (r, c) with r >= c at
    /// `band[c * (bw + 1) + (r - c)]`.
    band: Vec<S>,
    /// perm[new] = old
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl<S: Real> BandedCholesky<S> {
    pub fn factor(matrix: &CsrMatrix<S>) -> Result<Self, SparseError> {
        if matrix.nrows != matrix.ncols {
            return Err(SparseError::DimensionMismatch(format!(
                "{}x{} not square",
                matrix.nrows, matrix.ncols
            )));
        }
        let n = matrix.nrows;
        let perm = reverse_cuthill_mckee(matrix);
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut bandwidth = 0usize;
        for r in 0..n {
            let (cols, _) = matrix.row(r);
            for &c in cols {
                bandwidth = bandwidth.max(inv_perm[r].abs_diff(inv_perm[c]));
            }
        }
        let bw = bandwidth;
        let mut band = vec![S::zero(); n * (bw + 1)];
        for r in 0..n {
            let (cols, vals) = matrix.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let (pr, pc) = (inv_perm[r], inv_perm[c]);
                if pr >= pc {
                    band[pc * (bw + 1) + (pr - pc)] += v;
                }
            }
        }
        // Banded Cholesky, column by column.
        for j in 0..n {
            let start = j.saturating_sub(bw);
            for k in start..j {
                let ljk = band[k * (bw + 1) + (j - k)];
                if ljk == S::zero() {
                    continue;
                }
                let top = (k + bw + 1).min(n);
                for i in j..top {
                    let lik = band[k * (bw + 1) + (i - k)];
                    band[j * (bw + 1) + (i - j)] -= lik * ljk;
                }
            }
            let pivot = band[j * (bw + 1)];
            if pivot <= S::zero() {
                return Err(SparseError::NotPositiveDefinite {
                    col: j,
                    pivot: pivot.to_f64_lossy(),
                });
            }
            let d = pivot.sqrt();
            let top = (j + bw + 1).min(n);
            for i in j..top {
                band[j * (bw + 1) + (i - j)] /= d;
            }
        }
        Ok(Self {
            n,
            bandwidth: bw,
            band,
            perm,
            inv_perm,
        })
    }

    fn solve_permuted(&self, b: &mut DVector<S>) {
        let bw = self.bandwidth;
        let n = self.n;
        for j in 0..n {
            let xj = b[j] / self.band[j * (bw + 1)];
            b[j] = xj;
            let top = (j + bw + 1).min(n);
            for i in (j + 1)..top {
                let lij = self.band[j * (bw + 1) + (i - j)];
                b[i] -= lij * xj;
            }
        }
        for j in (0..n).rev() {
            let top = (j + bw + 1).min(n);
            let mut acc = b[j];
            for i in (j + 1)..top {
                acc -= self.band[j * (bw + 1) + (i - j)] * b[i];
            }
            b[j] = acc / self.band[j * (bw + 1)];
        }
    }

    pub fn solve(&self, matrix: &CsrMatrix<S>, rhs: &DVector<S>) -> (DVector<S>, S) {
        let n = self.n;
        let mut pb = DVector::zeros(n);
        for new in 0..n {
            pb[new] = rhs[self.perm[new]];
        }
        self.solve_permuted(&mut pb);
        let mut x = DVector::zeros(n);
        for new in 0..n {
            x[self.perm[new]] = pb[new];
        }
        // One step of iterative refinement.
        let mut r = rhs - matrix.mul_vec(&x);
        let mut pr = DVector::zeros(n);
        for new in 0..n {
            pr[new] = r[self.perm[new]];
        }
        self.solve_permuted(&mut pr);
        for new in 0..n {
            x[self.perm[new]] += pr[new];
        }
        r = rhs - matrix.mul_vec(&x);
        let denom = rhs.norm().max(S::default_epsilon());
        (x, r.norm() / denom)
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Smallest eigenvalue estimate by inverse power iteration, usable as a
    /// conditioning metric for reported matrices.
    pub fn min_eigenvalue_estimate(&self, matrix: &CsrMatrix<S>, iterations: usize) -> S {
        let n = self.n;
        let mut x = DVector::from_element(n, S::one() / S::of_usize(n));
        let mut lambda = S::zero();
        for _ in 0..iterations {
            let (y, _) = self.solve(matrix, &x);
            let norm = y.norm();
            if norm == S::zero() {
                break;
            }
            x = y / norm;
            let ax = matrix.mul_vec(&x);
            lambda = x.dot(&ax);
        }
        lambda
    }

    pub fn inv_perm(&self) -> &[usize] {
        &self.inv_perm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> (CsrMatrix<f64>, DMatrix<f64>) {
        let mut rng = StdRng::seed_from_u64(seed);
        // Banded-ish random SPD matrix: A = B^T B + n I on a sparse pattern.
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(3)..(i + 4).min(n) {
                let v = rng.random_range(-1.0..1.0);
                dense[(i, j)] += v;
                dense[(j, i)] += v;
            }
            dense[(i, i)] += n as f64;
        }
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if dense[(i, j)] != 0.0 {
                    triplets.push((i, j, dense[(i, j)]));
                }
            }
        }
        (CsrMatrix::from_triplets(n, n, triplets), dense)
    }

    #[test]
    fn csr_roundtrip_and_product() {
        let a = CsrMatrix::from_triplets(
            2,
            3,
            vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (0, 0, 1.0)],
        );
        assert_eq!(a.nnz(), 3); // duplicate summed
        let d = a.to_dense();
        assert_eq!(d[(0, 0)], 2.0);
        let b = CsrMatrix::from_triplets(3, 2, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 1, 1.0)]);
        let c = a.mul_csr(&b);
        let cd = c.to_dense();
        assert_eq!(cd[(0, 0)], 2.0);
        assert_eq!(cd[(0, 1)], 2.0);
        assert_eq!(cd[(1, 0)], 3.0);
    }

    #[test]
    fn banded_cholesky_matches_dense_solve() {
        for n in [5usize, 40, 120] {
            let (a, dense) = random_spd(n, n as u64);
            let chol = BandedCholesky::factor(&a).unwrap();
            let mut rng = StdRng::seed_from_u64(7);
            let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let (x, resid) = chol.solve(&a, &b);
            assert!(resid <= 1e-13, "residual {resid}");
            let xd = dense.clone().lu().solve(&b).unwrap();
            assert_relative_eq!((x - xd).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn not_positive_definite_detected() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(matches!(
            BandedCholesky::factor(&a),
            Err(SparseError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rcm_reduces_bandwidth_on_a_path() {
        // A path graph numbered randomly has large natural bandwidth.
        let n = 50;
        let order: Vec<usize> = {
            let mut v: Vec<usize> = (0..n).collect();
            let mut rng = StdRng::seed_from_u64(3);
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                v.swap(i, j);
            }
            v
        };
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 4.0));
        }
        for w in order.windows(2) {
            triplets.push((w[0], w[1], -1.0));
            triplets.push((w[1], w[0], -1.0));
        }
        let a = CsrMatrix::from_triplets(n, n, triplets);
        let chol = BandedCholesky::factor(&a).unwrap();
        assert!(chol.bandwidth() <= 2, "bandwidth {}", chol.bandwidth());
    }

    #[test]
    fn min_eigenvalue_estimate_is_positive_for_spd() {
        let (a, dense) = random_spd(30, 9);
        let chol = BandedCholesky::factor(&a).unwrap();
        let est = chol.min_eigenvalue_estimate(&a, 200);
        let eig = dense.symmetric_eigen();
        let min = eig.eigenvalues.iter().fold(f64::MAX, |m, &v| m.min(v));
        assert!(est > 0.0);
        // Power iteration can stall between clustered eigenvalues; the
        // estimate is a conditioning metric, not a precise eigensolve.
        assert!(
            est >= 0.99 * min && est <= 1.2 * min,
            "estimate {est} vs true minimum {min}"
        );
    }
}
