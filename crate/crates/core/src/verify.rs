//! Property suite: runs the smoothness, partition-of-unity, extraction,
//! duality, and dimension checks on a built pipeline and reports one
//! outcome per property. Used by the command-line `check` subcommand and
//! the acceptance tests.

use crate::assembly::{assemble_load, assemble_matrix};
use crate::basis::{space_dimension_oracle, FunctionKind, SplineFunction};
use crate::bb::{poly_to_bb, smoothness_residual, BBPatch, MonomialCubic};
use crate::extraction::Fraction;
use crate::geometry::Pt;
use crate::mesh::{predicted_counts, Counts, Triangulation};
use crate::problems::{Pipeline, ProblemError};
use crate::scalar::Real;
use crate::sparse::BandedCholesky;
use nalgebra::DVector;
use std::collections::BTreeMap;

/// Outcome of one property check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Deterministic low-discrepancy-ish points in the unit square, mapped to
/// the mesh bounding box.
fn sample_points<S: Real>(tri: &Triangulation<S>, n: usize) -> Vec<Pt<S>> {
    let (mut min, mut max) = (tri.vertices[0], tri.vertices[0]);
    for p in &tri.vertices {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let mut out = Vec::with_capacity(n);
    let mut u = 0.5f64;
    let mut v = 0.25f64;
    for _ in 0..n {
        // Weyl sequence with irrational increments.
        u = (u + 0.7548776662466927) % 1.0;
        v = (v + 0.5698402909980532) % 1.0;
        out.push(Pt::new(
            min.x + (max.x - min.x) * S::of(u),
            min.y + (max.y - min.y) * S::of(v),
        ));
    }
    out
}

/// Interior micro-edges with their two incident micro-triangles.
fn interior_micro_edges<S: Real>(
    ps: &crate::psrefine::PsRefinement<S>,
) -> Vec<(usize, usize, usize, usize)> {
    let mut edge_map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (m, mt) in ps.micro_triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (mt.verts[k], mt.verts[(k + 1) % 3]);
            let key = if a < b { [a, b] } else { [b, a] };
            edge_map.entry(key).or_default().push(m);
        }
    }
    edge_map
        .into_iter()
        .filter(|(_, tris)| tris.len() == 2)
        .map(|([u, v], tris)| (u, v, tris[0], tris[1]))
        .collect()
}

fn patch_or_zero<S: Real>(
    ps: &crate::psrefine::PsRefinement<S>,
    f: &SplineFunction<S>,
    m: usize,
) -> BBPatch<S> {
    f.patch(ps, m)
        .unwrap_or_else(|| BBPatch::zero(ps.micro_corners(m)))
}

/// Maximum smoothness residual of the given order across one micro-edge for
/// every function in the family.
fn max_family_residual<S: Real>(
    ps: &crate::psrefine::PsRefinement<S>,
    functions: &[&SplineFunction<S>],
    edges: &[(usize, usize, usize, usize)],
    order: usize,
) -> S {
    let mut worst = S::zero();
    for &(u, v, ma, mb) in edges {
        let pu = ps.micro_vertices[u];
        let pv = ps.micro_vertices[v];
        for f in functions {
            if !f.patches.contains_key(&ma) && !f.patches.contains_key(&mb) {
                continue;
            }
            let fa = patch_or_zero(ps, f, ma);
            let fb = patch_or_zero(ps, f, mb);
            let r = smoothness_residual(&fa, &fb, (&pu, &pv), order, 7)
                .expect("micro-edge shared by construction");
            worst = worst.max(r);
        }
    }
    worst
}

/// Splits the interior micro-edges into the categories used by the
/// super-smoothness statements.
struct EdgeCategories {
    /// Edge-point to split-point edges (C2 for every space).
    super_edges: Vec<(usize, usize, usize, usize)>,
    /// Edges ending at a split point, keyed by whether the point is at the
    /// `u` end, for pointwise C2 checks.
    split_point_edges: Vec<(usize, usize, usize, usize, bool)>,
    /// Interior edges of symmetric triangles.
    sym_edges: Vec<(usize, usize, usize, usize)>,
    all: Vec<(usize, usize, usize, usize)>,
}

fn categorize_edges<S: Real>(ps: &crate::psrefine::PsRefinement<S>) -> EdgeCategories {
    let n_v = ps.base.vertices.len();
    let n_e = ps.base.edges.len();
    let split_base = n_v + n_e;
    let all = interior_micro_edges(ps);
    let mut super_edges = Vec::new();
    let mut split_point_edges = Vec::new();
    let mut sym_edges = Vec::new();
    for &(u, v, ma, mb) in &all {
        let u_split = u >= split_base;
        let v_split = v >= split_base;
        let u_edgept = u >= n_v && u < split_base;
        let v_edgept = v >= n_v && v < split_base;
        if (u_edgept && v_split) || (v_edgept && u_split) {
            super_edges.push((u, v, ma, mb));
        }
        if u_split || v_split {
            let k = if u_split { u - split_base } else { v - split_base };
            split_point_edges.push((u, v, ma, mb, u_split));
            if ps.sym_flags[k] {
                sym_edges.push((u, v, ma, mb));
            }
        }
    }
    EdgeCategories {
        super_edges,
        split_point_edges,
        sym_edges,
        all,
    }
}

/// C2 jump of a function family at the split-point end of micro-edges.
fn max_pointwise_c2<S: Real>(
    ps: &crate::psrefine::PsRefinement<S>,
    functions: &[&SplineFunction<S>],
    edges: &[(usize, usize, usize, usize, bool)],
) -> S {
    let mut worst = S::zero();
    for &(u, v, ma, mb, at_u) in edges {
        let pu = ps.micro_vertices[u];
        let pv = ps.micro_vertices[v];
        let point = if at_u { pu } else { pv };
        for f in functions {
            if !f.patches.contains_key(&ma) && !f.patches.contains_key(&mb) {
                continue;
            }
            let fa = patch_or_zero(ps, f, ma);
            let fb = patch_or_zero(ps, f, mb);
            let scale = {
                let m = fa.max_abs_coeff().max(fb.max_abs_coeff());
                m.max(S::one())
            };
            for (a, b) in [(2usize, 0usize), (1, 1), (0, 2)] {
                let da = fa.derivative(a, b).expect("cubic");
                let db = fb.derivative(a, b).expect("cubic");
                let jump = (da.eval(&point) - db.eval(&point)).abs() / scale;
                worst = worst.max(jump);
            }
        }
    }
    worst
}

/// Tolerances of the property suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteTolerances {
    pub partition_of_unity: f64,
    pub nonnegativity: f64,
    pub c1: f64,
    pub c2: f64,
    pub duality: f64,
    pub cubic_precision: f64,
}

impl Default for SuiteTolerances {
    fn default() -> Self {
        Self {
            partition_of_unity: 1e-12,
            nonnegativity: -1e-10,
            c1: 1e-10,
            c2: 1e-9,
            duality: 1e-10,
            cubic_precision: 1e-10,
        }
    }
}

/// Runs every property check on a built pipeline. `coarse` and `level`
/// identify the refinement for the entity-count checks; `pu_samples` is the
/// number of partition-of-unity sample points.
pub fn property_suite<S: Real>(
    pipe: &Pipeline<S>,
    coarse: &Counts,
    level: usize,
    pu_samples: usize,
    tol: SuiteTolerances,
) -> Result<Vec<CheckOutcome>, ProblemError> {
    let basis = &pipe.basis;
    let ps = &basis.ps;
    let chain = &pipe.chain;
    let mut out = Vec::new();

    // Entity counts and dimension formulas.
    let counts = ps.base.counts();
    let predicted = predicted_counts(coarse, level);
    let dims_ok = counts == predicted
        && basis.dim() == 3 * counts.vertices + 4 * counts.edges
        && chain.dim(1) == 3 * counts.vertices + 2 * counts.edges
        && chain.dim(2)
            == 3 * counts.vertices
                + ps.n_sym()
                + 3 * (counts.triangles - ps.n_sym())
                + counts.boundary_edges;
    out.push(CheckOutcome::new(
        "dimension-formulas",
        dims_ok,
        format!(
            "counts {:?}, dim S0/S1/S2 = {}/{}/{}",
            counts,
            basis.dim(),
            chain.dim(1),
            chain.dim(2)
        ),
    ));

    // Materialized reduced families.
    let fam0: Vec<&SplineFunction<S>> = basis.functions.iter().map(|f| &f.spline).collect();
    let mats1 = chain.materialize(basis, 1);
    let mats2 = chain.materialize(basis, 2);
    let fam1: Vec<&SplineFunction<S>> = mats1.iter().collect();
    let fam2: Vec<&SplineFunction<S>> = mats2.iter().collect();

    // Partition of unity and nonnegativity for all three families.
    let pts = sample_points(&ps.base, pu_samples);
    let mut pu_worst = S::zero();
    let mut neg_worst = S::zero();
    for p in &pts {
        let Some(m) = ps.locate_micro(p) else { continue };
        for fam in [&fam0, &fam1, &fam2] {
            let mut sum = S::zero();
            for f in fam.iter() {
                let v = f.eval_in(ps, m, p);
                sum += v;
                neg_worst = neg_worst.min(v);
            }
            pu_worst = pu_worst.max((sum - S::one()).abs());
        }
    }
    out.push(CheckOutcome::new(
        "partition-of-unity",
        pu_worst.to_f64_lossy() <= tol.partition_of_unity,
        format!("max |sum - 1| = {:.3e}", pu_worst.to_f64_lossy()),
    ));
    let min_coeff = basis
        .functions
        .iter()
        .map(|f| f.spline.min_coeff())
        .fold(S::zero(), |m, v| m.min(v));
    let neg = min_coeff.min(neg_worst);
    out.push(CheckOutcome::new(
        "nonnegativity",
        neg.to_f64_lossy() >= tol.nonnegativity,
        format!("min coefficient/value = {:.3e}", neg.to_f64_lossy()),
    ));

    // Smoothness: C1 for all families everywhere; C2 suites per space.
    let cats = categorize_edges(ps);
    let mut c1_worst = S::zero();
    for fam in [&fam0, &fam1, &fam2] {
        c1_worst = c1_worst.max(max_family_residual(ps, fam, &cats.all, 1));
    }
    out.push(CheckOutcome::new(
        "c1-continuity",
        c1_worst.to_f64_lossy() <= tol.c1,
        format!("max gradient jump = {:.3e}", c1_worst.to_f64_lossy()),
    ));

    let vertex_fns: Vec<&SplineFunction<S>> = basis
        .functions
        .iter()
        .filter(|f| matches!(f.kind, FunctionKind::Vertex { .. }))
        .map(|f| &f.spline)
        .collect();
    let edge_fns1: Vec<&SplineFunction<S>> = fam1[chain.m..].to_vec();
    let edge_fns2: Vec<&SplineFunction<S>> = fam2[chain.m..].to_vec();
    let mut c2_worst = S::zero();
    // Vertex functions: C2 at split points, across super edges, inside
    // symmetric triangles.
    c2_worst = c2_worst.max(max_pointwise_c2(ps, &vertex_fns, &cats.split_point_edges));
    c2_worst = c2_worst.max(max_family_residual(ps, &vertex_fns, &cats.super_edges, 2));
    c2_worst = c2_worst.max(max_family_residual(ps, &vertex_fns, &cats.sym_edges, 2));
    // First reduction: C2 at split points and across super edges.
    c2_worst = c2_worst.max(max_pointwise_c2(ps, &edge_fns1, &cats.split_point_edges));
    c2_worst = c2_worst.max(max_family_residual(ps, &edge_fns1, &cats.super_edges, 2));
    // Second reduction: additionally C2 inside symmetric triangles.
    c2_worst = c2_worst.max(max_pointwise_c2(ps, &edge_fns2, &cats.split_point_edges));
    c2_worst = c2_worst.max(max_family_residual(ps, &edge_fns2, &cats.super_edges, 2));
    c2_worst = c2_worst.max(max_family_residual(ps, &edge_fns2, &cats.sym_edges, 2));
    out.push(CheckOutcome::new(
        "c2-super-smoothness",
        c2_worst.to_f64_lossy() <= tol.c2,
        format!("max second-derivative jump = {:.3e}", c2_worst.to_f64_lossy()),
    ));

    // Extraction exactness.
    let one = Fraction::new(1, 1);
    let col_sums_ok = chain.h1.column_sums().iter().all(|s| *s == one)
        && chain.h2.column_sums().iter().all(|s| *s == one);
    let h1_rows_ok = (0..chain.h1.nrows).all(|r| {
        let (cols, vals) = chain.h1.row(r);
        cols.len() == 2 && vals.iter().all(|&v| v == one)
    });
    let allowed = [one, Fraction::new(1, 3), Fraction::new(2, 3)];
    let h2_vals_ok = chain.h2.values.iter().all(|v| allowed.contains(v));
    let h2_perm_ok = (ps.n_sym() == 0) == chain.h2.is_permutation();
    out.push(CheckOutcome::new(
        "extraction-exactness",
        col_sums_ok && h1_rows_ok && h2_vals_ok && h2_perm_ok,
        format!(
            "column sums exact: {col_sums_ok}, H1 rows paired: {h1_rows_ok}, \
             H2 values in {{1/3, 2/3, 1}}: {h2_vals_ok}, permutation iff no \
             symmetric triangles: {h2_perm_ok}"
        ),
    ));

    // Blossom duality of the reduced coefficients for random cubics, with
    // the coefficients produced independently by an L2 Gram solve.
    let duality_worst = duality_residual(pipe, 20)?;
    out.push(CheckOutcome::new(
        "blossom-duality",
        duality_worst <= tol.duality,
        format!("max coefficient deviation = {duality_worst:.3e}"),
    ));

    // Cubic precision in all three spaces.
    let cubic_worst = cubic_precision_residual(pipe)?;
    out.push(CheckOutcome::new(
        "cubic-precision",
        cubic_worst <= tol.cubic_precision,
        format!("max L2 projection error over 10 monomials = {cubic_worst:.3e}"),
    ));

    Ok(out)
}

/// Largest deviation between the Gram-solve coefficients of random cubics
/// in the reduced spaces and the blossom values they must equal.
pub fn duality_residual<S: Real>(pipe: &Pipeline<S>, n_cubics: usize) -> Result<f64, ProblemError> {
    let basis = &pipe.basis;
    let ps = &basis.ps;
    let chain = &pipe.chain;
    let mut worst = 0.0f64;
    // Deterministic pseudo-random cubic coefficients.
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    for r in [1usize, 2] {
        let gram = assemble_matrix(&basis, chain, r, 0, 0, 0, 6)?;
        let chol = BandedCholesky::factor(&gram.matrix)?;
        for _ in 0..n_cubics {
            let mono = MonomialCubic::<S>(std::array::from_fn(|_| S::of(next())));
            let load = assemble_load(&basis, chain, r, &|p| mono.eval(p), 12)?;
            let (coeffs, _) = chol.solve(&gram.matrix, &load);
            let reference = poly_to_bb(&mono, &ps.micro_corners(0));
            if r == 1 {
                for (i, pair) in chain.xi1.iter().enumerate() {
                    let [a, b] = ps.base.edges[pair.edge];
                    let third = match pair.triangle {
                        Some(k) => ps.split_points[k],
                        None => ps.edge_points[pair.edge],
                    };
                    let expected = reference.blossom(&[
                        ps.base.vertices[a],
                        ps.base.vertices[b],
                        third,
                    ]);
                    let got = coeffs[chain.m + i];
                    worst = worst.max((got - expected).abs().to_f64_lossy());
                }
            } else {
                for (i, key) in chain.xi2.iter().enumerate() {
                    let (None, Some(k)) = (key.edge, key.triangle) else {
                        continue;
                    };
                    let [a, b, c] = ps.base.triangles[k];
                    let expected = reference.blossom(&[
                        ps.base.vertices[a],
                        ps.base.vertices[b],
                        ps.base.vertices[c],
                    ]);
                    let got = coeffs[chain.m + i];
                    worst = worst.max((got - expected).abs().to_f64_lossy());
                }
            }
        }
    }
    Ok(worst)
}

/// Largest L2 error of least-squares fits of the ten cubic monomials over
/// the three spaces.
pub fn cubic_precision_residual<S: Real>(pipe: &Pipeline<S>) -> Result<f64, ProblemError> {
    let basis = &pipe.basis;
    let chain = &pipe.chain;
    let ps = &basis.ps;
    let rule = crate::quadrature::QuadratureRule::<S>::with_degree(12)?;
    let mut worst = 0.0f64;
    for r in 0..3 {
        let gram = assemble_matrix(basis, chain, r, 0, 0, 0, 6)?;
        let chol = BandedCholesky::factor(&gram.matrix)?;
        for mono_idx in 0..10 {
            let mut mono_coeffs = [S::zero(); 10];
            mono_coeffs[mono_idx] = S::one();
            let mono = MonomialCubic(mono_coeffs);
            let load = assemble_load(basis, chain, r, &|p| mono.eval(p), 12)?;
            let (coeffs, _) = chol.solve(&gram.matrix, &load);
            let full = pipe.to_full_space(r, &coeffs)?;
            let s = basis.combine(&full);
            let mut err2 = S::zero();
            for m in 0..ps.micro_triangles.len() {
                let corners = ps.micro_corners(m);
                let patch = s
                    .patch(ps, m)
                    .unwrap_or_else(|| BBPatch::zero(corners));
                for (p, w) in rule.points_on(&corners) {
                    let e = patch.eval(&p) - mono.eval(&p);
                    err2 += w * e * e;
                }
            }
            worst = worst.max(err2.sqrt().to_f64_lossy());
        }
    }
    Ok(worst)
}

/// Nullspace-oracle check: the C0/C1 constraint nullspace dimension must
/// equal the basis cardinality.
pub fn oracle_matches_dimension<S: Real>(pipe: &Pipeline<S>) -> Result<CheckOutcome, ProblemError> {
    let expected = pipe.basis.dim();
    match space_dimension_oracle(&pipe.basis.ps) {
        Ok(dim) => Ok(CheckOutcome::new(
            "nullspace-oracle",
            dim == expected,
            format!("oracle {dim}, basis {expected}"),
        )),
        Err(e) => Ok(CheckOutcome::new(
            "nullspace-oracle",
            false,
            format!("oracle failed: {e}"),
        )),
    }
}

/// Evaluates every function of every family at one point and returns the
/// three partition-of-unity sums (helper for dump verification).
pub fn partition_sums_at<S: Real>(pipe: &Pipeline<S>, p: &Pt<S>) -> Option<[S; 3]> {
    let ps = &pipe.basis.ps;
    let m = ps.locate_micro(p)?;
    let vals = DVector::from_iterator(
        pipe.basis.dim(),
        pipe.basis
            .functions
            .iter()
            .map(|f| f.spline.eval_in(ps, m, p)),
    );
    let v1 = pipe.chain.h1_ext.apply(&vals).ok()?;
    let v2 = pipe.chain.h2_ext.apply(&v1).ok()?;
    Some([vals.sum(), v1.sum(), v2.sum()])
}
