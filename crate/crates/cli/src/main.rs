use clap::{Parser, ValueEnum};
use hpdg_core::benchmark::{format_table, run_benchmark_with, BenchmarkConfig, GridKind, DEFAULT_GAMMA, DEFAULT_TOL};
use hpdg_core::MacroGrid;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Grid {
    Quad,
    Simplex,
}

/// hp-adaptive SIPG solver for the L-shape reentrant-corner benchmark.
#[derive(Debug, Parser)]
#[command(name = "hpdg-poisson", version)]
struct Args {
    #[arg(long, value_enum, default_value = "quad")]
    grid: Grid,
    /// Target for the global estimator; also scales the marking thresholds.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Interior penalty constant.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Minimal (and initial) polynomial degree.
    #[arg(long, default_value_t = 3)]
    kmin: usize,
    #[arg(long, default_value_t = 8)]
    kmax: usize,
    /// Maximal number of solves.
    #[arg(long, default_value_t = 9)]
    max_iter: usize,
    /// Output directory for table.csv and mesh_<iter>.vtk.
    #[arg(long, default_value = "output")]
    out: PathBuf,
    /// Macro grid file replacing the built-in L-shape.
    #[arg(long = "macro")]
    macro_grid: Option<PathBuf>,
    /// Coarsening threshold; defaults to TOL/|G|.
    #[arg(long)]
    eta_star: Option<f64>,
    /// Refinement threshold; defaults to TOL/sqrt(|G|).
    #[arg(long)]
    eta_upper: Option<f64>,
}

fn run(args: Args) -> Result<(), String> {
    let macro_grid = match &args.macro_grid {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            Some(MacroGrid::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?)
        }
        None => None,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let config = BenchmarkConfig {
        grid: match args.grid {
            Grid::Quad => GridKind::Quad,
            Grid::Simplex => GridKind::Simplex,
        },
        tol: args.tol,
        gamma: args.gamma,
        k_min: args.kmin,
        k_max: args.kmax,
        max_iterations: args.max_iter,
        eta_lower: args.eta_star,
        eta_upper: args.eta_upper,
        macro_grid,
        output_dir: Some(args.out),
        ..Default::default()
    };
    let records = run_benchmark_with(&config, |r| {
        eprintln!(
            "iteration {}: {} elements, {} dofs, eta {:.3e}",
            r.iteration, r.elements, r.dofs, r.eta
        )
    })
    .map_err(|e| e.to_string())?;
    print!("{}", format_table(&records));
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
