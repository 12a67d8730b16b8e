//! Property-based and cross-cutting invariants that exercise the pipeline
//! beyond the per-module unit tests.

use nalgebra::DVector;
use proptest::prelude::*;
use ps_splines_core::basis::{build_basis, greville_points, greville_triangle, FunctionKind};
use ps_splines_core::geometry::{barycentric, Pt};
use ps_splines_core::mesh::{predicted_counts, Triangulation};
use ps_splines_core::problems::Pipeline;
use ps_splines_core::psrefine::{PsRefinement, SplitStrategy};
use std::path::Path;

fn bundled_mesh() -> Triangulation<f64> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../meshes/unit_square_unstructured.json");
    Triangulation::load_mesh_from_path(&path).unwrap()
}

/// Fan triangulation of a convex polygon described by angle jitters.
fn fan(n_t: usize, jitter: &[f64]) -> Triangulation<f64> {
    let n = n_t + 2;
    let vertices: Vec<Pt<f64>> = (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5 * jitter[k % jitter.len()])
                / n as f64;
            let r = 1.0 + 0.25 * jitter[(k + 1) % jitter.len()];
            Pt::new(r * a.cos(), r * a.sin())
        })
        .collect();
    let triangles: Vec<[usize; 3]> = (1..n - 1).map(|k| [0, k, k + 1]).collect();
    Triangulation::from_parts(vertices, triangles).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_counts_match_formulas(
        n_t in 2usize..=10,
        level in 1usize..=8,
        jitter in proptest::collection::vec(0.0f64..0.9, 4..=8),
    ) {
        let mesh = fan(n_t, &jitter);
        let refined = mesh.uniform_refine(level).unwrap();
        prop_assert_eq!(refined.counts(), predicted_counts(&mesh.counts(), level));
        // Conforming: interior edges have two triangles, boundary one.
        for (e, adj) in refined.edge_triangles.iter().enumerate() {
            let n = adj.iter().filter(|a| a.is_some()).count();
            prop_assert_eq!(n, if refined.edge_boundary[e] { 1 } else { 2 });
        }
    }

    #[test]
    fn symmetric_count_respects_bounds(
        n_t in 2usize..=6,
        level in 3usize..=6,
        jitter in proptest::collection::vec(0.05f64..0.85, 4..=8),
    ) {
        let mesh = fan(n_t, &jitter);
        let refined = mesh.uniform_refine(level).unwrap();
        let ps = PsRefinement::build(refined, SplitStrategy::PreferBarycenter).unwrap();
        let n_sym = ps.n_sym();
        let lower = (level - 3) * (level - 3) * n_t;
        let upper = (level * level - 3 * (level - 1)) * n_t;
        prop_assert!(n_sym >= lower, "n_sym {} below {}", n_sym, lower);
        prop_assert!(n_sym <= upper, "n_sym {} above {}", n_sym, upper);
    }

    #[test]
    fn classification_partitions_triangles(
        n_t in 2usize..=6,
        level in 1usize..=6,
        jitter in proptest::collection::vec(0.05f64..0.85, 4..=8),
    ) {
        let mesh = fan(n_t, &jitter);
        let refined = mesh.uniform_refine(level).unwrap();
        prop_assert_eq!(refined.class_r.len(), refined.triangles.len());
        prop_assert!(refined.class_r.iter().all(|&r| r <= 2));
        // Interior-lattice oracle: triangles with no vertex on any coarse
        // edge must carry r = 0, and their count matches brute force.
        let zeros = refined.class_r.iter().filter(|&&r| r == 0).count();
        let expected = if level >= 3 { (level - 3) * (level - 3) * n_t } else { 0 };
        prop_assert_eq!(zeros, expected);
    }
}

#[test]
fn greville_triangle_contains_points_interior_star() {
    // Regular hexagon fan: an interior vertex of valence six.
    let mut vertices = vec![Pt::new(0.0, 0.0)];
    for k in 0..6 {
        let a = std::f64::consts::PI * k as f64 / 3.0;
        vertices.push(Pt::new(a.cos(), a.sin()));
    }
    let triangles: Vec<[usize; 3]> = (1..=6).map(|k| [0, k, k % 6 + 1]).collect();
    let mesh = Triangulation::from_parts(vertices, triangles).unwrap();
    let ps = PsRefinement::build(mesh, SplitStrategy::PreferBarycenter).unwrap();
    let pts = greville_points(&ps, 0);
    let q = greville_triangle(&ps, 0, &pts).unwrap();
    for p in &pts {
        let l = barycentric(&q.corners, p);
        assert!(l.iter().all(|&v| v >= -1e-12), "point outside: {l:?}");
    }
    // The vertex itself lies strictly inside.
    let l = barycentric(&q.corners, &ps.base.vertices[0]);
    assert!(l.iter().all(|&v| v > 1e-6), "vertex not strictly inside: {l:?}");
}

#[test]
fn boundary_vertex_greville_triangle_has_boundary_side() {
    // Vertex 4 of the bundled mesh is (0.45, 0): a boundary vertex between
    // two collinear boundary edges on y = 0.
    let mesh = bundled_mesh();
    assert_eq!(mesh.vertices[4], Pt::new(0.45, 0.0));
    let ps = PsRefinement::build(mesh, SplitStrategy::PreferBarycenter).unwrap();
    let pts = greville_points(&ps, 4);
    let q = greville_triangle(&ps, 4, &pts).unwrap();
    let mut parallel = 0;
    for k in 0..3 {
        let e = q.corners[(k + 1) % 3] - q.corners[k];
        if e.y.abs() <= 1e-12 * e.norm() {
            parallel += 1;
        }
    }
    assert_eq!(parallel, 1, "exactly one side on the boundary line");
    for p in &pts {
        let l = barycentric(&q.corners, p);
        assert!(l.iter().all(|&v| v >= -1e-12));
    }
}

#[test]
fn collinear_boundary_vertex_has_one_trace_free_function() {
    let mesh = bundled_mesh();
    let pipe = Pipeline::build(&mesh, 1, SplitStrategy::PreferBarycenter).unwrap();
    // For boundary vertex 4 with collinear boundary edges, exactly one of
    // the three vertex functions has zero trace but nonzero normal
    // derivative on the boundary.
    let flagged: Vec<_> = (0..3)
        .map(|a| pipe.basis.boundary_class[3 * 4 + a])
        .collect();
    let zero_trace_only = flagged
        .iter()
        .filter(|c| c.zero_trace && !c.zero_normal_deriv)
        .count();
    let fully_active = flagged
        .iter()
        .filter(|c| !c.zero_trace)
        .count();
    assert_eq!(zero_trace_only, 1, "flags: {flagged:?}");
    assert_eq!(fully_active, 2, "flags: {flagged:?}");
}

#[test]
fn gram_matrix_is_positive_definite() {
    use ps_splines_core::assembly::assemble_matrix;
    let mesh = Triangulation::from_parts(
        vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let pipe = Pipeline::build(&mesh, 1, SplitStrategy::PreferBarycenter).unwrap();
    let gram = assemble_matrix(&pipe.basis, &pipe.chain, 0, 0, 0, 0, 6).unwrap();
    let dense = gram.matrix.to_dense();
    let eig = dense.symmetric_eigen();
    let min = eig.eigenvalues.iter().fold(f64::MAX, |m, &v| m.min(v));
    assert!(min > 0.0, "Gram matrix must be positive definite, min {min}");
    // 21 linearly independent functions on the single split triangle.
    assert_eq!(gram.matrix.nrows, 21);
}

#[test]
fn permutation_congruence_preserves_entries() {
    use ps_splines_core::assembly::assemble_matrix;
    // Level 1 on the bundled mesh has no symmetric triangles, so H2 is a
    // permutation and the congruence only reorders rows and columns.
    let mesh = bundled_mesh();
    let pipe = Pipeline::build(&mesh, 1, SplitStrategy::PreferBarycenter).unwrap();
    assert!(pipe.chain.h2.is_permutation());
    let m1 = assemble_matrix(&pipe.basis, &pipe.chain, 1, 0, 0, 0, 6).unwrap();
    let m2 = pipe.chain.h2_ext.congruence(&m1.matrix).unwrap();
    let a = m1.matrix.to_dense();
    let b = m2.to_dense();
    // Row i of H2 has its unit entry at column p(i).
    let perm: Vec<usize> = (0..pipe.chain.h2_ext.nrows)
        .map(|r| pipe.chain.h2_ext.row(r).0[0])
        .collect();
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            assert_eq!(b[(i, j)], a[(perm[i], perm[j])]);
        }
    }
}

#[test]
fn vertex_function_jets_match_greville_coordinates() {
    // The three functions of a vertex carry the values and gradients of the
    // affine barycentric coordinates of its Greville triangle.
    let mesh = bundled_mesh();
    let pipe = Pipeline::build(&mesh, 1, SplitStrategy::PreferBarycenter).unwrap();
    let ps = &pipe.basis.ps;
    for f in &pipe.basis.functions {
        let FunctionKind::Vertex { vertex, local } = f.kind else {
            continue;
        };
        let q = &pipe.basis.greville[vertex];
        let pv = ps.base.vertices[vertex];
        let m = ps
            .micro_triangles
            .iter()
            .position(|mt| mt.corner == vertex)
            .unwrap();
        let patch = f.spline.patch(ps, m).unwrap();
        let value = patch.eval(&pv);
        assert!((value - q.coordinate(local, &pv)).abs() <= 1e-11);
        let dx = patch.derivative(1, 0).unwrap().eval(&pv);
        let dy = patch.derivative(0, 1).unwrap().eval(&pv);
        // Affine coordinate gradient by finite sampling of the coordinate.
        let gx = (q.coordinate(local, &Pt::new(pv.x + 0.5, pv.y))
            - q.coordinate(local, &pv))
            / 0.5;
        let gy = (q.coordinate(local, &Pt::new(pv.x, pv.y + 0.5))
            - q.coordinate(local, &pv))
            / 0.5;
        assert!((dx - gx).abs() <= 1e-9, "vertex {vertex} fn {local}");
        assert!((dy - gy).abs() <= 1e-9, "vertex {vertex} fn {local}");
    }
}

#[test]
fn basis_and_oracle_agree_on_two_triangle_level_two() {
    let mesh = Triangulation::from_parts(
        vec![
            Pt::new(0.0, 0.0),
            Pt::new(1.0, 0.0),
            Pt::new(1.0, 1.0),
            Pt::new(0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap();
    let refined = mesh.uniform_refine(2).unwrap();
    let counts = refined.counts();
    let ps = PsRefinement::build(refined, SplitStrategy::PreferBarycenter).unwrap();
    let oracle = ps_splines_core::basis::space_dimension_oracle(&ps).unwrap();
    assert_eq!(oracle, 3 * counts.vertices + 4 * counts.edges);
    let basis = build_basis(ps).unwrap();
    assert_eq!(basis.dim(), oracle);
}

#[test]
fn solution_scatter_roundtrip() {
    use ps_splines_core::assembly::{assemble_matrix, assemble_load, restrict};
    let mesh = bundled_mesh();
    let pipe = Pipeline::build(&mesh, 1, SplitStrategy::PreferBarycenter).unwrap();
    let system = assemble_matrix(&pipe.basis, &pipe.chain, 0, 0, 0, 0, 6).unwrap();
    let load = assemble_load(&pipe.basis, &pipe.chain, 0, &|_| 1.0, 6).unwrap();
    let (_, reduced_load, restriction) =
        restrict(&system, &load, &pipe.flags[0], true, false).unwrap();
    let full = restriction.scatter(&reduced_load);
    assert_eq!(full.len(), pipe.basis.dim());
    let nonzero = full.iter().filter(|v| **v != 0.0).count();
    assert_eq!(nonzero, restriction.keep.len());
    let _ = DVector::<f64>::zeros(1);
}
