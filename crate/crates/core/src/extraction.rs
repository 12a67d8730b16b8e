//! Index sets and sparse extraction matrices for the two space reductions.
//!
//! The first reduction merges the four edge functions of each edge pairwise
//! (matrix `H1`), gaining C2 smoothness at split points and across the
//! edge-point/split-point edges. The second reduction combines the merged
//! functions over triangles with symmetric configuration (matrix `H2`),
//! gaining C2 smoothness over those triangles. Entries are the exact
//! rationals 1/3, 2/3, and 1, stored as fractions so column-sum checks are
//! exact; they are converted to the floating scalar only on application.

use crate::basis::{SplineBasis, SplineFunction, Xi0Triplet};
use crate::psrefine::PsRefinement;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use num_rational::Ratio;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

pub type Fraction = Ratio<i64>;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("xi index maps are inconsistent: {0}")]
    IndexMapInconsistent(String),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("symmetric triangle {0} lacks a neighbor across edge {1}")]
    MissingNeighbor(usize, usize),
}

/// Key of the first-reduction index set: an edge together with one of its
/// sides (`None` on the outer side of a boundary edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Xi1Pair {
    pub edge: usize,
    pub triangle: Option<usize>,
}

/// Key of the second-reduction index set: either a symmetric triangle
/// (edge = None) or a surviving edge/side pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Xi2Key {
    pub edge: Option<usize>,
    pub triangle: Option<usize>,
}

/// Sparse row-compressed matrix with exact rational entries.
#[derive(Debug, Clone)]
pub struct ExtractionMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Fraction>,
}

impl ExtractionMatrix {
    fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, Fraction)>>) -> Self {
        assert_eq!(rows.len(), nrows);
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                debug_assert!(c < ncols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
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

    pub fn row(&self, r: usize) -> (&[usize], &[Fraction]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Exact column sums.
    pub fn column_sums(&self) -> Vec<Fraction> {
        let mut sums = vec![Fraction::new(0, 1); self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                sums[c] += v;
            }
        }
        sums
    }

    /// True when the matrix is a permutation of the identity.
    pub fn is_permutation(&self) -> bool {
        if self.nrows != self.ncols || self.nnz() != self.nrows {
            return false;
        }
        let one = Fraction::new(1, 1);
        let mut seen = vec![false; self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            if cols.len() != 1 || vals[0] != one || seen[cols[0]] {
                return false;
            }
            seen[cols[0]] = true;
        }
        true
    }

    /// Block-diagonal extension `diag(I_m, H)`.
    pub fn extend(&self, m: usize) -> Self {
        let one = Fraction::new(1, 1);
        let mut rows: Vec<Vec<(usize, Fraction)>> = Vec::with_capacity(m + self.nrows);
        for i in 0..m {
            rows.push(vec![(i, one)]);
        }
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            rows.push(cols.iter().zip(vals).map(|(&c, &v)| (m + c, v)).collect());
        }
        Self::from_rows(m + self.nrows, m + self.ncols, rows)
    }

    /// Floating-point copy for application to assembled objects.
    pub fn to_csr<S: Real>(&self) -> CsrMatrix<S> {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                triplets.push((r, c, fraction_to_scalar::<S>(*v)));
            }
        }
        CsrMatrix::from_triplets(self.nrows, self.ncols, triplets)
    }

    /// `H * v` on floating-point vectors.
    pub fn apply<S: Real>(
        &self,
        v: &nalgebra::DVector<S>,
    ) -> Result<nalgebra::DVector<S>, ExtractionError> {
        if v.len() != self.ncols {
            return Err(ExtractionError::DimensionMismatch {
                expected: self.ncols,
                got: v.len(),
            });
        }
        let mut out = nalgebra::DVector::zeros(self.nrows);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            let mut acc = S::zero();
            for (&c, val) in cols.iter().zip(vals) {
                acc += fraction_to_scalar::<S>(*val) * v[c];
            }
            out[r] = acc;
        }
        Ok(out)
    }

    /// `H^T * v`, mapping reduced coefficients back to the finer basis.
    pub fn apply_transpose<S: Real>(
        &self,
        v: &nalgebra::DVector<S>,
    ) -> Result<nalgebra::DVector<S>, ExtractionError> {
        if v.len() != self.nrows {
            return Err(ExtractionError::DimensionMismatch {
                expected: self.nrows,
                got: v.len(),
            });
        }
        let mut out = nalgebra::DVector::zeros(self.ncols);
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, val) in cols.iter().zip(vals) {
                out[c] += fraction_to_scalar::<S>(*val) * v[r];
            }
        }
        Ok(out)
    }

    /// Congruence transform `H * M * H^T` on a sparse symmetric matrix.
    pub fn congruence<S: Real>(&self, m: &CsrMatrix<S>) -> Result<CsrMatrix<S>, ExtractionError> {
        if m.nrows != self.ncols || m.ncols != self.ncols {
            return Err(ExtractionError::DimensionMismatch {
                expected: self.ncols,
                got: m.nrows,
            });
        }
        let h: CsrMatrix<S> = self.to_csr();
        let ht = h.transpose();
        Ok(h.mul_csr(m).mul_csr(&ht))
    }

    /// Coordinate-triplet text export with exact fraction values.
    pub fn export_triplets(&self) -> String {
        let mut out = String::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                if *v.denom() == 1 {
                    writeln!(out, "{r} {c} {}", v.numer()).unwrap();
                } else {
                    writeln!(out, "{r} {c} {}/{}", v.numer(), v.denom()).unwrap();
                }
            }
        }
        out
    }
}

pub fn fraction_to_scalar<S: Real>(f: Fraction) -> S {
    S::of(*f.numer() as f64) / S::of(*f.denom() as f64)
}

/// First-reduction index set in canonical order (edge index, then triangle
/// index with the boundary marker last).
pub fn build_xi1<S: Real>(ps: &PsRefinement<S>) -> Vec<Xi1Pair> {
    let tri = &ps.base;
    let mut out = Vec::with_capacity(2 * tri.edges.len());
    for e in 0..tri.edges.len() {
        let mut sides: Vec<Option<usize>> = tri.edge_triangles[e]
            .iter()
            .copied()
            .filter(|t| t.is_some())
            .collect();
        if tri.edge_boundary[e] {
            sides.push(None);
        }
        sides.sort_by_key(|t| t.map_or(usize::MAX, |k| k));
        for t in sides {
            out.push(Xi1Pair { edge: e, triangle: t });
        }
    }
    out
}

/// Builds `H1`: each row pairs the two xi0 triplets sharing an edge/side,
/// with unit entries.
pub fn build_h1(xi1: &[Xi1Pair], xi0: &[Xi0Triplet]) -> Result<ExtractionMatrix, ExtractionError> {
    let mut lookup: BTreeMap<(usize, Option<usize>), Vec<usize>> = BTreeMap::new();
    for (i, t) in xi0.iter().enumerate() {
        lookup.entry((t.edge, t.triangle)).or_default().push(i);
    }
    let one = Fraction::new(1, 1);
    let mut rows = Vec::with_capacity(xi1.len());
    for pair in xi1 {
        let cols = lookup.get(&(pair.edge, pair.triangle)).ok_or_else(|| {
            ExtractionError::IndexMapInconsistent(format!(
                "no xi0 triplets for edge {} side {:?}",
                pair.edge, pair.triangle
            ))
        })?;
        if cols.len() != 2 {
            return Err(ExtractionError::IndexMapInconsistent(format!(
                "edge {} side {:?} has {} triplets, expected 2",
                pair.edge,
                pair.triangle,
                cols.len()
            )));
        }
        rows.push(vec![(cols[0], one), (cols[1], one)]);
    }
    Ok(ExtractionMatrix::from_rows(xi1.len(), xi0.len(), rows))
}

/// Second-reduction index set: the surviving xi1 pairs plus one entry per
/// symmetric triangle, ordered with the symmetric-triangle rows last.
pub fn build_xi2<S: Real>(ps: &PsRefinement<S>, xi1: &[Xi1Pair]) -> Vec<Xi2Key> {
    let mut out: Vec<Xi2Key> = xi1
        .iter()
        .filter(|p| p.triangle.is_none_or(|k| !ps.sym_flags[k]))
        .map(|p| Xi2Key {
            edge: Some(p.edge),
            triangle: p.triangle,
        })
        .collect();
    for (k, &sym) in ps.sym_flags.iter().enumerate() {
        if sym {
            out.push(Xi2Key {
                edge: None,
                triangle: Some(k),
            });
        }
    }
    out
}

/// Builds `H2` following the symmetric-configuration recombination: the row
/// of a symmetric triangle carries 2/3 on its own three edge/side pairs and
/// 1/3 on the neighboring pairs; the row of an asymmetric pair adjacent to
/// a symmetric triangle carries 2/3 on itself and 1/3 across the edge; all
/// remaining rows are unit rows. An empty symmetric set gives a permutation
/// of the identity.
pub fn build_h2<S: Real>(
    ps: &PsRefinement<S>,
    xi2: &[Xi2Key],
    xi1: &[Xi1Pair],
) -> Result<ExtractionMatrix, ExtractionError> {
    let tri = &ps.base;
    let xi1_of = |edge: usize, triangle: Option<usize>| -> Result<usize, ExtractionError> {
        xi1.iter()
            .position(|p| p.edge == edge && p.triangle == triangle)
            .ok_or_else(|| {
                ExtractionError::IndexMapInconsistent(format!(
                    "missing xi1 pair for edge {edge} side {triangle:?}"
                ))
            })
    };
    let other_side = |edge: usize, k: usize| -> Option<usize> {
        let [a, b] = tri.edge_triangles[edge];
        match (a, b) {
            (Some(x), other) if x == k => other,
            (other, Some(x)) if x == k => other,
            _ => None,
        }
    };
    let third = Fraction::new(1, 3);
    let two_thirds = Fraction::new(2, 3);
    let one = Fraction::new(1, 1);
    let mut rows = Vec::with_capacity(xi2.len());
    for key in xi2 {
        match (key.edge, key.triangle) {
            (None, Some(k)) => {
                let mut row = Vec::with_capacity(6);
                for &e in &tri.triangle_edges[k] {
                    row.push((xi1_of(e, Some(k))?, two_thirds));
                    let nb = other_side(e, k).ok_or(ExtractionError::MissingNeighbor(k, e))?;
                    row.push((xi1_of(e, Some(nb))?, third));
                }
                rows.push(row);
            }
            (Some(e), side) => {
                let opposite = match side {
                    Some(k) => other_side(e, k),
                    None => tri.edge_triangles[e][0],
                };
                let sym_opposite = opposite.is_some_and(|k| ps.sym_flags[k]);
                if sym_opposite {
                    rows.push(vec![
                        (xi1_of(e, side)?, two_thirds),
                        (xi1_of(e, opposite)?, third),
                    ]);
                } else {
                    rows.push(vec![(xi1_of(e, side)?, one)]);
                }
            }
            (None, None) => {
                return Err(ExtractionError::IndexMapInconsistent(
                    "xi2 key with neither edge nor triangle".into(),
                ))
            }
        }
    }
    Ok(ExtractionMatrix::from_rows(xi2.len(), xi1.len(), rows))
}

/// The full extraction chain of a basis: index sets, the two reduction
/// matrices, and their block-extended forms.
#[derive(Debug)]
pub struct ExtractionChain {
    pub xi1: Vec<Xi1Pair>,
    pub xi2: Vec<Xi2Key>,
    pub h1: ExtractionMatrix,
    pub h2: ExtractionMatrix,
    pub h1_ext: ExtractionMatrix,
    pub h2_ext: ExtractionMatrix,
    /// Number of vertex functions (the identity block size).
    pub m: usize,
}

impl ExtractionChain {
    pub fn build<S: Real>(basis: &SplineBasis<S>) -> Result<Self, ExtractionError> {
        let ps = &basis.ps;
        let xi1 = build_xi1(ps);
        let h1 = build_h1(&xi1, &basis.xi0)?;
        let xi2 = build_xi2(ps, &xi1);
        let h2 = build_h2(ps, &xi2, &xi1)?;
        let m = basis.num_vertex_functions();
        let h1_ext = h1.extend(m);
        let h2_ext = h2.extend(m);
        Ok(Self {
            xi1,
            xi2,
            h1,
            h2,
            h1_ext,
            h2_ext,
            m,
        })
    }

    /// Extended extraction matrices applied in order to reach space `r`
    /// from the full space; empty for `r = 0`.
    pub fn extended_to(&self, r: usize) -> Vec<&ExtractionMatrix> {
        match r {
            0 => vec![],
            1 => vec![&self.h1_ext],
            2 => vec![&self.h1_ext, &self.h2_ext],
            _ => panic!("space index must be 0, 1, or 2"),
        }
    }

    /// Dimension of space `r`: vertex block plus reduced edge block.
    pub fn dim(&self, r: usize) -> usize {
        match r {
            0 => self.m + self.h1.ncols,
            1 => self.m + self.h1.nrows,
            2 => self.m + self.h2.nrows,
            _ => panic!("space index must be 0, 1, or 2"),
        }
    }

    /// Materializes the basis functions of space `r` as sparse splines
    /// (used for direct-assembly cross-checks and boundary classification).
    pub fn materialize<S: Real>(&self, basis: &SplineBasis<S>, r: usize) -> Vec<SplineFunction<S>> {
        let chain = self.extended_to(r);
        let mut rows: Vec<Vec<(usize, Fraction)>> = (0..basis.dim())
            .map(|i| vec![(i, Fraction::new(1, 1))])
            .collect();
        for h in chain {
            let mut next: Vec<Vec<(usize, Fraction)>> = Vec::with_capacity(h.nrows);
            for row in 0..h.nrows {
                let (cols, vals) = h.row(row);
                let mut acc: BTreeMap<usize, Fraction> = BTreeMap::new();
                for (&c, v) in cols.iter().zip(vals) {
                    for &(src, w) in &rows[c] {
                        *acc.entry(src).or_insert_with(|| Fraction::new(0, 1)) += *v * w;
                    }
                }
                next.push(acc.into_iter().collect());
            }
            rows = next;
        }
        rows.into_iter()
            .map(|combo| {
                let mut f = SplineFunction::default();
                for (src, w) in combo {
                    f.accumulate(&basis.functions[src].spline, fraction_to_scalar(w));
                }
                f
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::geometry::Pt;
    use crate::mesh::Triangulation;
    use crate::psrefine::SplitStrategy;
    use nalgebra::DVector;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn basis_for(level: usize, strategy: SplitStrategy) -> SplineBasis<f64> {
        let tri = Triangulation::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
        .uniform_refine(level)
        .unwrap();
        let ps = crate::psrefine::PsRefinement::build(tri, strategy).unwrap();
        build_basis(ps).unwrap()
    }

    #[test]
    fn h1_structure() {
        let basis = basis_for(2, SplitStrategy::PreferBarycenter);
        let chain = ExtractionChain::build(&basis).unwrap();
        let n_e = basis.ps.base.edges.len();
        assert_eq!(chain.h1.nrows, 2 * n_e);
        assert_eq!(chain.h1.ncols, 4 * n_e);
        let one = Fraction::new(1, 1);
        for r in 0..chain.h1.nrows {
            let (cols, vals) = chain.h1.row(r);
            assert_eq!(cols.len(), 2);
            assert!(vals.iter().all(|&v| v == one));
        }
        for s in chain.h1.column_sums() {
            assert_eq!(s, one);
        }
        // H1 * H1^T = 2 I: rows are disjoint with two unit entries.
        let h: crate::sparse::CsrMatrix<f64> = chain.h1.to_csr();
        let prod = h.mul_csr(&h.transpose()).to_dense();
        for r in 0..prod.nrows() {
            for c in 0..prod.ncols() {
                let expected = if r == c { 2.0 } else { 0.0 };
                assert_eq!(prod[(r, c)], expected);
            }
        }
    }

    #[test]
    fn h2_permutation_when_no_symmetric_triangles() {
        let basis = basis_for(1, SplitStrategy::IncenterOnT2);
        assert_eq!(basis.ps.n_sym(), 0);
        let chain = ExtractionChain::build(&basis).unwrap();
        assert!(chain.h2.is_permutation());
    }

    #[test]
    fn h2_structure_level_four() {
        let basis = basis_for(4, SplitStrategy::PreferBarycenter);
        assert_eq!(basis.ps.n_sym(), 7);
        let chain = ExtractionChain::build(&basis).unwrap();
        // Row count: one per symmetric triangle, three per asymmetric
        // triangle, one per boundary edge.
        let counts = basis.ps.base.counts();
        let m2 = 7 + 3 * (counts.triangles - 7) + counts.boundary_edges;
        assert_eq!(m2, 46);
        assert_eq!(chain.h2.nrows, m2);
        let one = Fraction::new(1, 1);
        let third = Fraction::new(1, 3);
        let two_thirds = Fraction::new(2, 3);
        for v in &chain.h2.values {
            assert!(*v == one || *v == third || *v == two_thirds);
        }
        for s in chain.h2.column_sums() {
            assert_eq!(s, one);
        }
        for (r, key) in chain.xi2.iter().enumerate() {
            let (cols, _) = chain.h2.row(r);
            if key.edge.is_none() {
                assert_eq!(cols.len(), 6);
            } else {
                assert!(cols.len() <= 2);
            }
        }
    }

    #[test]
    fn extended_chain_evaluation_consistency() {
        let basis = basis_for(2, SplitStrategy::PreferBarycenter);
        let chain = ExtractionChain::build(&basis).unwrap();
        let ps = &basis.ps;
        let mut rng = StdRng::seed_from_u64(5);
        let s1 = chain.materialize(&basis, 1);
        let s2 = chain.materialize(&basis, 2);
        for _ in 0..40 {
            let p = Pt::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let Some(m) = ps.locate_micro(&p) else { continue };
            let s0_vals = DVector::from_iterator(
                basis.dim(),
                basis.functions.iter().map(|f| f.spline.eval_in(ps, m, &p)),
            );
            let v1 = chain.h1_ext.apply(&s0_vals).unwrap();
            for (i, f) in s1.iter().enumerate() {
                assert!((v1[i] - f.eval_in(ps, m, &p)).abs() <= 1e-13);
            }
            let v2 = chain.h2_ext.apply(&v1).unwrap();
            for (i, f) in s2.iter().enumerate() {
                assert!((v2[i] - f.eval_in(ps, m, &p)).abs() <= 1e-13);
            }
            let sum1: f64 = v1.iter().sum();
            let sum2: f64 = v2.iter().sum();
            assert!((sum1 - 1.0).abs() <= 1e-12);
            assert!((sum2 - 1.0).abs() <= 1e-12);
            // All reduced values stay nonnegative.
            assert!(v1.iter().all(|&v| v >= -1e-10));
            assert!(v2.iter().all(|&v| v >= -1e-10));
        }
    }

    #[test]
    fn extended_column_sums_are_one() {
        let basis = basis_for(3, SplitStrategy::PreferBarycenter);
        let chain = ExtractionChain::build(&basis).unwrap();
        let one = Fraction::new(1, 1);
        for h in [&chain.h1_ext, &chain.h2_ext] {
            for s in h.column_sums() {
                assert_eq!(s, one);
            }
        }
    }

    #[test]
    fn export_uses_exact_fractions() {
        let basis = basis_for(4, SplitStrategy::PreferBarycenter);
        let chain = ExtractionChain::build(&basis).unwrap();
        let text = chain.h2.export_triplets();
        assert!(text.contains("2/3"));
        assert!(text.contains("1/3"));
        let first = text.lines().next().unwrap();
        assert_eq!(first.split_whitespace().count(), 3);
    }
}
