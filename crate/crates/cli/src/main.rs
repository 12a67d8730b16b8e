//! Command-line front end: mesh ingestion, dimension tables, the three
//! application problems, basis dumps, and the property-check suite.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ps_splines_core::basis::dump_basis_json;
use ps_splines_core::mesh::{predicted_counts, Triangulation};
use ps_splines_core::problems::{
    convergence_study, Pipeline, ProblemKind, QuadratureConfig,
};
use ps_splines_core::psrefine::{PsRefinement, SplitStrategy};
use ps_splines_core::verify::{oracle_matches_dimension, property_suite, SuiteTolerances};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ps-splines",
    about = "C1 cubic Powell-Sabin B-splines over triangulations: dimension \
             tables, fitting and boundary-value problems in the full and \
             reduced spline spaces, basis dumps, and property checks."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    /// Barycenters everywhere, demoting offending boundary-class triangles.
    PreferBarycenter,
    /// Incenters on all triangles with a full edge on a coarse edge.
    IncenterOnT2,
}

impl From<StrategyArg> for SplitStrategy {
    fn from(v: StrategyArg) -> Self {
        match v {
            StrategyArg::PreferBarycenter => SplitStrategy::PreferBarycenter,
            StrategyArg::IncenterOnT2 => SplitStrategy::IncenterOnT2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    #[value(name = "0")]
    S0,
    #[value(name = "1")]
    S1,
    #[value(name = "2")]
    S2,
    All,
}

impl SpaceArg {
    fn spaces(self) -> Vec<usize> {
        match self {
            SpaceArg::S0 => vec![0],
            SpaceArg::S1 => vec![1],
            SpaceArg::S2 => vec![2],
            SpaceArg::All => vec![0, 1, 2],
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Mesh in JSON form {"vertices": [[x,y],...], "triangles": [[i,j,k],...]}.
    #[arg(long)]
    mesh: PathBuf,
    /// Split-point strategy.
    #[arg(long, value_enum, default_value = "prefer-barycenter")]
    strategy: StrategyArg,
}

#[derive(Args)]
struct ProblemArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Spline space: 0 (full), 1, 2, or all.
    #[arg(long, value_enum, default_value = "all")]
    space: SpaceArg,
    /// Comma-separated refinement levels, positive and increasing.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    levels: Vec<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON mirror with run metadata.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Quadrature degree for matrix assembly.
    #[arg(long, default_value_t = 6)]
    quad_assembly: usize,
    /// Quadrature degree for data terms and error norms.
    #[arg(long, default_value_t = 12)]
    quad_norms: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension table of the three spaces per refinement level.
    Dims {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        levels: Vec<usize>,
        /// Debug dump of the Powell-Sabin refinement of the last level as
        /// mesh JSON with a per-triangle split-kind array.
        #[arg(long)]
        dump_ps: Option<PathBuf>,
    },
    /// Least-squares fit of the oscillatory reference target.
    Fit(ProblemArgs),
    /// Second-order problem with homogeneous Dirichlet conditions.
    Poisson(ProblemArgs),
    /// Clamped fourth-order problem.
    Biharmonic(ProblemArgs),
    /// JSON dump of basis functions.
    BasisDump {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// Selection: "all", "v<i>" for a vertex triplet, or "e<j>" for an
        /// edge quartet.
        #[arg(long, default_value = "all")]
        function: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the property suite on one mesh and level.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// Partition-of-unity sample count.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Directory for coordinate-triplet exports of the extraction
        /// matrices (written as h1.txt and h2.txt).
        #[arg(long)]
        export_dir: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Validation(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e @ CliError::Numerical(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

fn check_thread_cap() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("PS_SPLINES_THREADS") {
        let cap: usize = v
            .parse()
            .map_err(|_| CliError::Validation(format!("PS_SPLINES_THREADS={v} is not a number")))?;
        if cap == 0 {
            return Err(CliError::Validation(
                "PS_SPLINES_THREADS must be positive".into(),
            ));
        }
        // The pipeline is single-threaded, so any positive cap is honored.
    }
    Ok(())
}

fn load_mesh(path: &PathBuf) -> Result<Triangulation<f64>, CliError> {
    Triangulation::load_mesh_from_path(path).map_err(validation)
}

fn validate_levels(levels: &[usize]) -> Result<(), CliError> {
    if levels.is_empty() {
        return Err(CliError::Validation("at least one level required".into()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] == 0 {
        return Err(CliError::Validation(
            "levels must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    check_thread_cap()?;
    match cli.command {
        Command::Dims {
            common,
            levels,
            dump_ps,
        } => {
            validate_levels(&levels)?;
            let mesh = load_mesh(&common.mesh)?;
            let coarse = mesh.counts();
            println!("level  n_v    n_e    n_be   n_t    n_sym  dim_S0  dim_S1  dim_S2");
            for (i, &level) in levels.iter().enumerate() {
                let refined = mesh.uniform_refine(level).map_err(validation)?;
                let ps = PsRefinement::build(refined, common.strategy.into())
                    .map_err(numerical)?;
                let c = ps.base.counts();
                if c != predicted_counts(&coarse, level) {
                    return Err(CliError::Numerical(format!(
                        "entity counts at level {level} disagree with the closed forms"
                    )));
                }
                let n_sym = ps.n_sym();
                let dim0 = 3 * c.vertices + 4 * c.edges;
                let dim1 = 3 * c.vertices + 2 * c.edges;
                let dim2 =
                    3 * c.vertices + n_sym + 3 * (c.triangles - n_sym) + c.boundary_edges;
                println!(
                    "{level:<6} {:<6} {:<6} {:<6} {:<6} {:<6} {dim0:<7} {dim1:<7} {dim2:<7}",
                    c.vertices, c.edges, c.boundary_edges, c.triangles, n_sym
                );
                if i + 1 == levels.len() {
                    if let Some(path) = &dump_ps {
                        std::fs::write(
                            path,
                            serde_json::to_string_pretty(&ps.dump_json())
                                .map_err(numerical)?,
                        )
                        .map_err(validation)?;
                    }
                }
            }
            Ok(())
        }
        Command::Fit(args) => run_problem_command(ProblemKind::LeastSquares, args),
        Command::Poisson(args) => run_problem_command(ProblemKind::Poisson, args),
        Command::Biharmonic(args) => run_problem_command(ProblemKind::Biharmonic, args),
        Command::BasisDump {
            common,
            level,
            function,
            out,
        } => {
            let mesh = load_mesh(&common.mesh)?;
            let pipe = Pipeline::build(&mesh, level, common.strategy.into())
                .map_err(numerical)?;
            let selection = parse_function_selection(&function, &pipe)?;
            let json = dump_basis_json(&pipe.basis, selection.as_deref());
            std::fs::write(&out, serde_json::to_string_pretty(&json).map_err(numerical)?)
                .map_err(validation)?;
            // Re-evaluated partition of unity over the three families.
            let mut worst = 0.0f64;
            let pts = 50;
            for i in 0..pts {
                let t = (i as f64 + 0.5) / pts as f64;
                let p = ps_splines_core::Point::new(t, (0.618 * i as f64) % 1.0);
                if let Some(sums) = ps_splines_core::verify::partition_sums_at(&pipe, &p) {
                    for s in sums {
                        worst = worst.max((s - 1.0).abs());
                    }
                }
            }
            println!("wrote {}; partition-of-unity deviation {worst:.3e}", out.display());
            if worst > 1e-10 {
                return Err(CliError::Numerical(format!(
                    "partition of unity violated: {worst:.3e}"
                )));
            }
            Ok(())
        }
        Command::Check {
            common,
            level,
            samples,
            export_dir,
        } => {
            let mesh = load_mesh(&common.mesh)?;
            let coarse = mesh.counts();
            let pipe = Pipeline::build(&mesh, level, common.strategy.into())
                .map_err(numerical)?;
            let mut checks = property_suite(
                &pipe,
                &coarse,
                level,
                samples,
                SuiteTolerances::default(),
            )
            .map_err(numerical)?;
            if pipe.basis.ps.micro_triangles.len() <= 120 {
                checks.push(oracle_matches_dimension(&pipe).map_err(numerical)?);
            }
            if let Some(dir) = export_dir {
                std::fs::create_dir_all(&dir).map_err(validation)?;
                std::fs::write(dir.join("h1.txt"), pipe.chain.h1.export_triplets())
                    .map_err(validation)?;
                std::fs::write(dir.join("h2.txt"), pipe.chain.h2.export_triplets())
                    .map_err(validation)?;
            }
            let mut failed = false;
            for c in &checks {
                println!(
                    "{}: {} ({})",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.detail
                );
                failed |= !c.passed;
            }
            if failed {
                return Err(CliError::Numerical("property suite failed".into()));
            }
            Ok(())
        }
    }
}

fn parse_function_selection(
    spec: &str,
    pipe: &Pipeline<f64>,
) -> Result<Option<Vec<usize>>, CliError> {
    if spec == "all" {
        return Ok(None);
    }
    let (kind, idx) = spec.split_at(1);
    let idx: usize = idx
        .parse()
        .map_err(|_| CliError::Validation(format!("bad function selector {spec:?}")))?;
    match kind {
        "v" => {
            if idx >= pipe.basis.ps.base.vertices.len() {
                return Err(CliError::Validation(format!("vertex {idx} out of range")));
            }
            Ok(Some(vec![3 * idx, 3 * idx + 1, 3 * idx + 2]))
        }
        "e" => {
            if idx >= pipe.basis.ps.base.edges.len() {
                return Err(CliError::Validation(format!("edge {idx} out of range")));
            }
            let m = pipe.basis.num_vertex_functions();
            let ids = pipe
                .basis
                .xi0
                .iter()
                .enumerate()
                .filter(|(_, t)| t.edge == idx)
                .map(|(i, _)| m + i)
                .collect();
            Ok(Some(ids))
        }
        _ => Err(CliError::Validation(format!(
            "bad function selector {spec:?}; use \"all\", \"v<i>\", or \"e<j>\""
        ))),
    }
}

fn run_problem_command(kind: ProblemKind, args: ProblemArgs) -> Result<(), CliError> {
    validate_levels(&args.levels)?;
    if args.quad_assembly == 0
        || args.quad_assembly > 20
        || args.quad_norms == 0
        || args.quad_norms > 20
    {
        return Err(CliError::Validation(
            "quadrature degrees must lie in 1..=20".into(),
        ));
    }
    let mesh = load_mesh(&args.common.mesh)?;
    let quad = QuadratureConfig {
        assembly: args.quad_assembly,
        norms: args.quad_norms,
    };
    let report = convergence_study(
        &mesh,
        kind,
        &args.space.spaces(),
        &args.levels,
        args.common.strategy.into(),
        quad,
    )
    .map_err(numerical)?;
    std::fs::write(&args.out, report.to_csv()).map_err(validation)?;
    println!("wrote {}", args.out.display());
    if let Some(json) = &args.json {
        std::fs::write(json, serde_json::to_string_pretty(&report).map_err(numerical)?)
            .map_err(validation)?;
        println!("wrote {}", json.display());
    }
    for row in &report.rows {
        println!(
            "{} space {} level {}: ndof {} L2 {:.3e} H1 {:.3e} H2 {:.3e}",
            row.problem, row.space, row.level, row.ndof, row.l2, row.h1, row.h2
        );
    }
    Ok(())
}
