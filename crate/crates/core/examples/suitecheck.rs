use ps_splines_core::mesh::Triangulation;
use ps_splines_core::problems::Pipeline;
use ps_splines_core::psrefine::SplitStrategy;
use ps_splines_core::verify::{oracle_matches_dimension, property_suite, SuiteTolerances};
use std::time::Instant;

fn main() {
    let mesh = Triangulation::<f64>::load_mesh_from_path(std::path::Path::new(
        "meshes/unit_square_unstructured.json",
    ))
    .unwrap();
    for level in [1usize, 2] {
        let t0 = Instant::now();
        let coarse = mesh.counts();
        let pipe = Pipeline::build(&mesh, level, SplitStrategy::PreferBarycenter).unwrap();
        let checks =
            property_suite(&pipe, &coarse, level, 1000, SuiteTolerances::default()).unwrap();
        for c in &checks {
            println!(
                "level {level} {}: {} ({})",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            );
        }
        if level == 1 {
            let oracle = oracle_matches_dimension(&pipe).unwrap();
            println!(
                "level {level} {}: {} ({})",
                oracle.name,
                if oracle.passed { "PASS" } else { "FAIL" },
                oracle.detail
            );
        }
        println!("level {level} took {:?}", t0.elapsed());
    }
}
