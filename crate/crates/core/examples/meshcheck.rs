use ps_splines_core::mesh::Triangulation;
use ps_splines_core::psrefine::{PsRefinement, SplitKind, SplitStrategy};

fn main() {
    let mesh = Triangulation::<f64>::load_mesh_from_path(std::path::Path::new(
        "meshes/unit_square_unstructured.json",
    ))
    .unwrap();
    let c = mesh.counts();
    println!(
        "base: v {} e {} be {} t {}",
        c.vertices, c.edges, c.boundary_edges, c.triangles
    );
    for level in [1usize, 2, 4, 8] {
        let refined = mesh.uniform_refine(level).unwrap();
        let ps = PsRefinement::build(refined, SplitStrategy::PreferBarycenter).unwrap();
        let demotions = ps
            .split_kinds
            .iter()
            .filter(|&&k| k == SplitKind::Incenter)
            .count();
        let rc = ps.base.counts();
        let m = 3 * rc.vertices;
        let dim0 = m + 4 * rc.edges;
        let dim1 = m + 2 * rc.edges;
        let m2 = ps.n_sym() + 3 * (rc.triangles - ps.n_sym()) + rc.boundary_edges;
        let dim2 = m + m2;
        let expected_sym = if level >= 2 {
            (level * level - 3 * (level - 1)) * c.triangles
        } else {
            0
        };
        println!(
            "level {level}: n_sym {} (per-macro max {}), demotions {demotions}, dims {dim0}/{dim1}/{dim2}, ratios {:.4}/{:.4}",
            ps.n_sym(),
            expected_sym,
            dim0 as f64 / dim1 as f64,
            dim0 as f64 / dim2 as f64
        );
    }
}
