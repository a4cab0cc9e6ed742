//! Reentrant-corner benchmark: `u = r^{2/3} sin(2φ/3)` on the L-shaped domain,
//! solved by the hp-adaptive loop with convergence tables and VTK output.

use crate::adapt::{estimate, hp_adapt_cycle, mark_hp, Estimate, MarkingParameters, DEFAULT_REGULARITY_MARGIN};
use crate::basis::{BasisFamily, Key};
use crate::error::{Error, Result};
use crate::mesh::{CellType, HierarchicalMesh, MacroGrid, Point};
use crate::quadrature::{default_order, element_rule};
use crate::sipg::{assemble, error_norms, ErrorIntegration, ProblemData};
use crate::space::{DiscreteFunction, DiscreteFunctionSpace};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

const ALPHA: f64 = 2.0 / 3.0;

/// Polar angle in `[0, 2π)`, measured counterclockwise from the positive x-axis.
fn angle(x: Point) -> f64 {
    let phi = x[1].atan2(x[0]);
    if phi < 0.0 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

pub fn exact_solution(x: Point) -> f64 {
    let r = x[0].hypot(x[1]);
    r.powf(ALPHA) * (ALPHA * angle(x)).sin()
}

/// `∇u = α r^{α−1} (sin((α−1)φ), cos((α−1)φ))`
pub fn exact_gradient(x: Point) -> Result<Point> {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    let phi = angle(x);
    let s = ALPHA * r.powf(ALPHA - 1.0);
    Ok([s * ((ALPHA - 1.0) * phi).sin(), s * ((ALPHA - 1.0) * phi).cos()])
}

/// `f = 0`, `g = u` with the exact solution attached.
pub fn problem_data(gamma: f64) -> Result<ProblemData> {
    Ok(ProblemData::new(|_| 0.0, exact_solution, gamma)?
        .with_exact(exact_solution, |x| exact_gradient(x).unwrap_or([f64::NAN; 2])))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Quad,
    Simplex,
}

impl GridKind {
    /// The 48-quad or 96-triangle L-shaped macro grid.
    pub fn macro_grid(self) -> MacroGrid {
        match self {
            GridKind::Quad => MacroGrid::l_shape(4),
            GridKind::Simplex => MacroGrid::l_shape_triangles(4),
        }
        .expect("built-in grid is valid")
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub grid: GridKind,
    pub tol: f64,
    pub gamma: f64,
    /// Also the initial degree on every macro element.
    pub k_min: usize,
    pub k_max: usize,
    /// Maximal number of solves (table rows).
    pub max_iterations: usize,
    pub solver_tol: f64,
    pub solver_max_iterations: usize,
    pub eta_lower: Option<f64>,
    pub eta_upper: Option<f64>,
    pub regularity_margin: f64,
    /// Replaces the built-in macro grid of `grid`.
    pub macro_grid: Option<MacroGrid>,
    /// Directory for `table.csv` and `mesh_<iter>.vtk`; nothing is written if unset.
    pub output_dir: Option<PathBuf>,
}

/// Default `TOL`. It also sets the marking thresholds `TOL/|G|` and
/// `TOL/√|G|`; with this value both default runs stay corner-dominated and
/// end after nine solves near `η ≈ 6e-3`.
pub const DEFAULT_TOL: f64 = 5.0e-4;
pub const DEFAULT_GAMMA: f64 = 10.0;

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            grid: GridKind::Quad,
            tol: DEFAULT_TOL,
            gamma: DEFAULT_GAMMA,
            k_min: 3,
            k_max: 8,
            max_iterations: 9,
            solver_tol: 1e-10,
            solver_max_iterations: 50_000,
            eta_lower: None,
            eta_upper: None,
            regularity_margin: DEFAULT_REGULARITY_MARGIN,
            macro_grid: None,
            output_dir: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::NonPositiveTolerance(self.tol));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "penalty constant must be positive, got {}",
                self.gamma
            )));
        }
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(Error::Config(format!(
                "need 1 ≤ k_min ≤ k_max, got k_min = {}, k_max = {}",
                self.k_min, self.k_max
            )));
        }
        if self.k_max > crate::basis::MAX_DEGREE {
            return Err(Error::Config(format!(
                "k_max = {} exceeds the maximal degree {}",
                self.k_max,
                crate::basis::MAX_DEGREE
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        Ok(())
    }

    fn marking(&self) -> MarkingParameters {
        MarkingParameters {
            tol: self.tol,
            k_min: self.k_min,
            k_max: self.k_max,
            eta_lower: self.eta_lower,
            eta_upper: self.eta_upper,
            regularity_margin: self.regularity_margin,
        }
    }
}

/// One row of the convergence table plus diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub elements: usize,
    pub dofs: usize,
    pub l2_error: f64,
    pub l2_eoc: Option<f64>,
    pub dg_error: f64,
    pub dg_eoc: Option<f64>,
    pub eta: f64,
    pub eff_index: f64,
    pub solver_iterations: usize,
    /// Peak index space of the adaptation that followed this solve.
    pub peak_index_space: Option<usize>,
    /// `|D^(m)| + |D^(m+1)|` for that adaptation.
    pub storage_bound: Option<usize>,
}

/// `EOC = −log(e_0/e_1) / log((N_0/N_1)^{1/2})`
pub fn eoc(e0: f64, e1: f64, n0: usize, n1: usize) -> Result<f64> {
    if n0 == n1 {
        return Err(Error::EqualDofCount(n0));
    }
    Ok(-(e0 / e1).ln() / (0.5 * (n0 as f64 / n1 as f64).ln()))
}

/// Fills the EOC columns from consecutive rows; the first row has none.
pub fn compute_eoc(records: &mut [IterationRecord]) -> Result<()> {
    for m in 1..records.len() {
        let (a, b) = (&records[m - 1], &records[m]);
        let l2 = eoc(a.l2_error, b.l2_error, a.dofs, b.dofs)?;
        let dg = eoc(a.dg_error, b.dg_error, a.dofs, b.dofs)?;
        records[m].l2_eoc = Some(l2);
        records[m].dg_eoc = Some(dg);
    }
    Ok(())
}

pub const CSV_HEADER: [&str; 8] = [
    "elements",
    "dofs",
    "l2_error",
    "l2_eoc",
    "dg_error",
    "dg_eoc",
    "eta",
    "eff_index",
];

fn fields(r: &IterationRecord) -> [String; 8] {
    let rate = |e: Option<f64>| e.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
    [
        r.elements.to_string(),
        r.dofs.to_string(),
        format!("{:.3e}", r.l2_error),
        rate(r.l2_eoc),
        format!("{:.3e}", r.dg_error),
        rate(r.dg_eoc),
        format!("{:.3e}", r.eta),
        format!("{:.3}", r.eff_index),
    ]
}

pub fn format_csv(records: &[IterationRecord]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&fields(r).join(","));
        out.push('\n');
    }
    out
}

/// The CSV content as right-aligned columns.
pub fn format_table(records: &[IterationRecord]) -> String {
    let rows: Vec<Vec<String>> = std::iter::once(CSV_HEADER.map(String::from).to_vec())
        .chain(records.iter().map(|r| fields(r).to_vec()))
        .collect();
    let widths: Vec<usize> = (0..CSV_HEADER.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(f, w)| format!("{f:>w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}

/// Cell mean `|E|⁻¹ ∫_E u_h` of every leaf.
pub fn cell_means(space: &DiscreteFunctionSpace, uh: &DiscreteFunction) -> Result<Vec<f64>> {
    space
        .mesh()
        .leaves()
        .iter()
        .map(|&id| {
            let set = space.basis_set(id)?;
            let c = space.local_dofs(uh, id)?;
            let k = set.key().degree();
            let rule = element_rule(set.cell_type(), default_order(k, k))?;
            let tab = set.tabulate(rule);
            let sum: f64 = (0..rule.len())
                .map(|q| rule.weights()[q] * tab.at(q).iter().zip(&c).map(|(j, ci)| ci * j.value()).sum::<f64>())
                .sum();
            Ok(sum / set.cell_type().reference_measure())
        })
        .collect()
}

/// Legacy ASCII VTK of the leaf grid with cell data `degree`, `eta` and `u_mean`.
pub fn write_vtk(
    out: &mut impl Write,
    space: &DiscreteFunctionSpace,
    uh: &DiscreteFunction,
    estimate: &Estimate,
) -> Result<()> {
    let mesh = space.mesh();
    let n = mesh.num_leaves();
    let nv = mesh.cell_type().num_vertices();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "hp-adaptive SIPG solution")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", n * nv)?;
    for e in mesh.leaf_elements() {
        for v in e.vertices() {
            writeln!(out, "{:.17e} {:.17e} 0", v[0], v[1])?;
        }
    }
    writeln!(out, "CELLS {} {}", n, n * (nv + 1))?;
    for i in 0..n {
        let ids: Vec<String> = (0..nv).map(|j| (i * nv + j).to_string()).collect();
        writeln!(out, "{} {}", nv, ids.join(" "))?;
    }
    writeln!(out, "CELL_TYPES {n}")?;
    let code = match mesh.cell_type() {
        CellType::Triangle => 5,
        CellType::Quad => 9,
    };
    for _ in 0..n {
        writeln!(out, "{code}")?;
    }
    writeln!(out, "CELL_DATA {n}")?;
    writeln!(out, "SCALARS degree int 1\nLOOKUP_TABLE default")?;
    for &id in mesh.leaves() {
        writeln!(out, "{}", space.key(id)?.degree())?;
    }
    writeln!(out, "SCALARS eta double 1\nLOOKUP_TABLE default")?;
    for ind in &estimate.indicators {
        writeln!(out, "{:.17e}", ind.eta())?;
    }
    writeln!(out, "SCALARS u_mean double 1\nLOOKUP_TABLE default")?;
    for m in cell_means(space, uh)? {
        writeln!(out, "{m:.17e}")?;
    }
    Ok(())
}

fn touches_origin(vertices: &[Point]) -> bool {
    vertices.iter().any(|v| v[0] == 0.0 && v[1] == 0.0)
}

/// Error quadrature: order `2k + 4`, three virtual subdivision levels on
/// elements touching the reentrant corner.
pub fn corner_integration() -> ErrorIntegration {
    ErrorIntegration {
        extra_order: 4,
        subdivisions: Box::new(|e| if touches_origin(e.vertices()) { 3 } else { 0 }),
    }
}

/// Runs the loop solve → estimate → mark → adapt. `on_record` sees each row
/// (without EOC) as soon as it is available.
pub fn run_benchmark_with(
    config: &BenchmarkConfig,
    mut on_record: impl FnMut(&IterationRecord),
) -> Result<Vec<IterationRecord>> {
    config.validate()?;
    let grid = config.macro_grid.clone().unwrap_or_else(|| config.grid.macro_grid());
    let family = BasisFamily::orthonormal();
    let mut space = DiscreteFunctionSpace::new(HierarchicalMesh::new(grid), family, Key::Iso(config.k_min))?;
    let data = problem_data(config.gamma)?;
    let integration = corner_integration();
    let marking_params = config.marking();
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut records = Vec::new();
    let mut guess: Option<DiscreteFunction> = None;
    for m in 0..config.max_iterations {
        let at = |e: Error| Error::Iteration {
            iteration: m,
            source: Box::new(e),
        };
        let system = assemble(&space, &data).map_err(at)?;
        let solution = system
            .solve(
                guess.as_ref().map(|g| g.values()),
                config.solver_tol,
                config.solver_max_iterations,
            )
            .map_err(at)?;
        let mut uh = DiscreteFunction::from_values(solution.x);
        let errors = error_norms(&space, &uh, &data, &integration).map_err(at)?;
        let est = estimate(&space, &uh, &data).map_err(at)?;
        let eta = est.global();
        let mut record = IterationRecord {
            iteration: m,
            elements: space.mesh().num_leaves(),
            dofs: space.size(),
            l2_error: errors.l2,
            l2_eoc: None,
            dg_error: errors.dg,
            dg_eoc: None,
            eta,
            eff_index: eta / errors.dg,
            solver_iterations: solution.iterations,
            peak_index_space: None,
            storage_bound: None,
        };
        if let Some(dir) = &config.output_dir {
            write_vtk_file(&dir.join(format!("mesh_{m}.vtk")), &space, &uh, &est).map_err(at)?;
        }

        let mut stop = eta <= config.tol || m + 1 == config.max_iterations;
        if !stop {
            let marking = mark_hp(&space, &uh, &est, &marking_params).map_err(at)?;
            if marking.is_empty() {
                stop = true;
            } else {
                let before = space.size();
                space.reset_peak_index_space();
                hp_adapt_cycle(&mut space, &mut uh, &marking).map_err(at)?;
                record.peak_index_space = Some(space.mapper().peak_index_space());
                record.storage_bound = Some(before + space.size());
                guess = Some(uh);
            }
        }
        on_record(&record);
        records.push(record);
        if stop {
            break;
        }
    }
    compute_eoc(&mut records)?;
    if let Some(dir) = &config.output_dir {
        std::fs::write(dir.join("table.csv"), format_csv(&records))?;
    }
    Ok(records)
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<IterationRecord>> {
    run_benchmark_with(config, |_| {})
}

fn write_vtk_file(path: &Path, space: &DiscreteFunctionSpace, uh: &DiscreteFunction, est: &Estimate) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_vtk(&mut file, space, uh, est)?;
    file.flush()?;
    Ok(())
}
