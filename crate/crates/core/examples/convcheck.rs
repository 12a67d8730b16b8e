use ps_splines_core::mesh::Triangulation;
use ps_splines_core::problems::{
    ManufacturedCase, Pipeline, ProblemForms, ProblemKind, QuadratureConfig,
};
use ps_splines_core::psrefine::SplitStrategy;
use std::time::Instant;

fn main() {
    let mesh = Triangulation::<f64>::load_mesh_from_path(std::path::Path::new(
        "meshes/unit_square_unstructured.json",
    ))
    .unwrap();
    let quad = QuadratureConfig::default();
    for level in [4usize, 8] {
        let t0 = Instant::now();
        let pipe = Pipeline::build(&mesh, level, SplitStrategy::PreferBarycenter).unwrap();
        let t_build = t0.elapsed();
        let case = ManufacturedCase::<f64>::least_squares_case();
        let t1 = Instant::now();
        let forms = ProblemForms::assemble(&pipe, ProblemKind::LeastSquares, &case, quad).unwrap();
        let t_asm = t1.elapsed();
        for r in [0usize, 1, 2] {
            let t2 = Instant::now();
            let res = forms.solve(&pipe, r, &case).unwrap();
            println!(
                "level {level} space {r}: ndof {} l2 {:.3e} (solve+norms {:?})",
                res.ndof,
                res.errors.l2,
                t2.elapsed()
            );
        }
        println!("level {level}: pipeline {t_build:?} assemble {t_asm:?}");
    }
}
