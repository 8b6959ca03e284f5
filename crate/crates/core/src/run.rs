//! Run orchestration and output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ForceSpec, Format, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::forms;
use crate::mesh::{write_cell_scalars, write_vtk_geometry, ChannelMesh};
use crate::params::ModelParams;
use crate::solution::DiscreteSolution;
use crate::solver::picard_solve;
use crate::space::MixedSpace;
use crate::sparse::dot;
use crate::verification::{
    estimate_infsup, run_convergence_study, ManufacturedCase, StudyChecks, StudyOptions,
};

/// Relative tolerance of the discrete energy identity.
pub const ENERGY_TOL: f64 = 1e-10;

/// One named pass/fail check with its measured value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Threshold the value is compared against.
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value >= limit,
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self {
            name: name.into(),
            value: v,
            limit: 1.0,
            passed: ok,
        }
    }

    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status}  {:<40} {:>14.6e}  (limit {:e})", self.name, self.value, self.limit)
    }
}

/// Result of [`run`]: overall status, files written and a printable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub success: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Writes the solution as a legacy ASCII VTK unstructured grid with point
/// data `velocity` and `pressure` and cell data `region`, `h_K` and `nut`.
pub fn write_fields<W: Write>(solution: &DiscreteSolution, params: &ModelParams, mut out: W) -> Result<()> {
    let space = solution.space();
    let mesh = space.mesh();
    let nut = forms::eddy_viscosity(space, &solution.velocity, params)?;
    let nv = mesh.vertices().len();
    let mut node = vec![usize::MAX; nv];
    let mut pressure = vec![usize::MAX; nv];
    for (e, tet) in mesh.tetrahedra().iter().enumerate() {
        let nodes = space.element_nodes(e);
        let ps = space.element_pressure(e);
        for a in 0..4 {
            node[tet[a]] = nodes[a];
            pressure[tet[a]] = ps[a];
        }
    }
    write_vtk_geometry(mesh, &mut out, "channel flow solution")?;
    writeln!(out, "POINT_DATA {nv}")?;
    writeln!(out, "VECTORS velocity double")?;
    for &k in &node {
        let v = solution.node_velocity(k);
        writeln!(out, "{} {} {}", v[0], v[1], v[2])?;
    }
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for &q in &pressure {
        writeln!(out, "{}", solution.pressure[q])?;
    }
    writeln!(out, "CELL_DATA {}", mesh.n_elements())?;
    write_cell_scalars(&mut out, "region", "int", mesh.regions().iter().map(|r| r.code().to_string()))?;
    write_cell_scalars(&mut out, "h_K", "double", mesh.diameters().iter().map(|h| h.to_string()))?;
    write_cell_scalars(
        &mut out,
        "nut",
        "double",
        (0..mesh.n_elements()).map(|e| nut.element_mean(space, e).to_string()),
    )?;
    out.flush()?;
    Ok(())
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    fn fields(&mut self, name: &str, solution: &DiscreteSolution, params: &ModelParams) -> Result<()> {
        let path = self.dir.join(name);
        write_fields(solution, params, BufWriter::new(fs::File::create(&path)?))?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs the configured mode and writes its outputs into the output directory.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    fs::create_dir_all(&config.output.directory)?;
    let mut w = Writer {
        dir: &config.output.directory,
        files: Vec::new(),
    };
    let (success, summary) = match config.mode {
        Mode::Solve => run_solve(config, &mut w)?,
        Mode::Study => run_study(config, &mut w)?,
        Mode::Verify => run_verify(config, &mut w)?,
    };
    Ok(RunOutcome {
        success,
        files: w.files,
        summary,
    })
}

fn run_solve(config: &RunConfig, w: &mut Writer) -> Result<(bool, String)> {
    let params = config.model_params();
    let mesh = Arc::new(ChannelMesh::build(&config.channel_geometry())?);
    let space = Arc::new(MixedSpace::taylor_hood(mesh));
    let (solution, report) = picard_solve(&space, &params, &config.solver)?;
    if config.output.wants(Format::Vtk) {
        w.fields("solution.vtk", &solution, &params)?;
    }
    if config.output.wants(Format::Json) {
        w.text("report.json", &report.to_json()?)?;
    }
    let summary = format!(
        "picard iterations {} ({}), energy residual {:e}, |v_h|_1 {:e}",
        report.iterations,
        if report.converged { "converged" } else { "not converged" },
        report.energy_residual,
        report.apriori.velocity_h1,
    );
    Ok((report.converged, summary))
}

/// Pass/fail checks derived from a finished study.
pub fn study_checks(checks: &StudyChecks) -> Vec<Check> {
    let min_order = checks.error_orders.iter().copied().fold(f64::INFINITY, f64::min);
    vec![
        Check::flag("velocity error strictly decreasing", checks.errors_decreasing),
        Check::at_least("observed H1 order (min)", min_order, 1.0),
        Check::flag("c(v_h; v_h) decreasing", checks.c_vv_decreasing),
        Check::at_least("c(v_h; v_h) h-rate", checks.c_vv_order, 0.5),
        Check::at_most("sup nu_t ratio spread", checks.nut.spread, 4.0),
        Check::at_most("a-priori ratio spread", checks.apriori_spread, 2.0),
        Check::flag("pressure bounded", checks.pressure_bounded),
        Check::at_most("energy identity (max)", checks.max_energy_residual, ENERGY_TOL),
    ]
}

fn manufactured_case(config: &RunConfig) -> Result<ManufacturedCase> {
    if config.physics.force != ForceSpec::Manufactured {
        return Err(Error::Config {
            path: "physics.force".into(),
            reason: "a study needs the manufactured force".into(),
        });
    }
    Ok(ManufacturedCase {
        nu: config.physics.nu,
        d: config.geometry.sublayer,
        angle: config.physics.angle,
    })
}

fn run_study(config: &RunConfig, w: &mut Writer) -> Result<(bool, String)> {
    let case = manufactured_case(config)?;
    let options = StudyOptions {
        coarsest: config.geometry.n1,
        levels: config.levels,
        infsup: true,
    };
    let study = run_convergence_study(
        &case,
        &config.channel_geometry(),
        &config.model_params(),
        &config.solver,
        &options,
    )?;
    if config.output.wants(Format::Csv) {
        w.text("table.csv", &study.table.to_csv())?;
    }
    if config.output.wants(Format::Json) {
        w.text("table.json", &study.table.to_json()?)?;
        for (k, report) in study.reports.iter().enumerate() {
            w.text(&format!("report_level{k}.json"), &report.to_json()?)?;
        }
    }
    let mut summary = study.table.to_csv();
    if study.failed {
        summary.push_str("FAIL  a level did not converge; the table is partial\n");
        return Ok((false, summary));
    }
    let checks = study_checks(&study.checks(&case, config.geometry.box_length)?);
    for c in &checks {
        summary.push_str(&c.line());
        summary.push('\n');
    }
    if config.output.wants(Format::Json) {
        w.text("study_checks.json", &serde_json::to_string_pretty(&checks)?)?;
    }
    Ok((checks.iter().all(|c| c.passed), summary))
}

fn run_verify(config: &RunConfig, w: &mut Writer) -> Result<(bool, String)> {
    let checks = verify_suite(config)?;
    let summary: Vec<String> = checks.iter().map(Check::line).collect();
    if config.output.wants(Format::Json) {
        w.text("verify.json", &serde_json::to_string_pretty(&checks)?)?;
    }
    Ok((checks.iter().all(|c| c.passed), summary.join("\n")))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Largest `|(B(z) v, v)|` relative to `sum |B_ij v_i v_j|` over `pairs`
/// random pairs `(z, v)`.
pub fn skew_symmetry_defect(space: &MixedSpace, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = space.n_velocity();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let z = random_vector(&mut rng, n);
        let v = random_vector(&mut rng, n);
        let b = forms::assemble_b(space, &z);
        let scale: f64 = b.triplets().map(|(i, j, x)| (x * v[i] * v[j]).abs()).sum();
        let value = b.form(&v, &v).abs();
        if scale > 0.0 {
            worst = worst.max(value / scale);
        }
    }
    worst
}

/// Largest relative round-trip error `|F^{-1}(F(beta)) - beta| / beta` over
/// `samples` log-uniform pairs `(beta, alpha)`.
pub fn wall_law_round_trip(params: &ModelParams, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = params.wall_law;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let beta = 10f64.powf(rng.random_range(-4.0..2.0));
        let alpha = 10f64.powf(rng.random_range(-2.0..4.0));
        let speed = law.forward(beta, alpha)?;
        let back = law.invert(speed, alpha, 1e-14, 200)?;
        worst = worst.max((back - beta).abs() / beta);
    }
    Ok(worst)
}

/// Largest pointwise residual of the manufactured solution in the momentum
/// equation, the divergence constraint and the Navier condition at both walls,
/// sampled at `samples` random points.
pub fn manufactured_residual(case: &ManufacturedCase, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let force = case.force();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let v = case.velocity(x);
        let g = case.gradient(x);
        let lap = case.laplacian(x);
        let f = force.eval(x);
        for i in 0..3 {
            let conv: f64 = (0..3).map(|j| v[j] * g[i][j]).sum();
            worst = worst.max((-case.nu * lap[i] + conv - f[i]).abs());
        }
        worst = worst.max((g[0][0] + g[1][1] + g[2][2]).abs());
        for (x3, normal) in [(0.0, -1.0), (1.0, 1.0)] {
            let y = [x[0], x[1], x3];
            let (v, g) = (case.velocity(y), case.gradient(y));
            worst = worst.max(v[2].abs());
            for i in 0..2 {
                worst = worst.max((-normal * g[i][2] - v[i] / case.d).abs());
            }
        }
    }
    worst
}

/// The invariant suite of `verify` mode on the configured mesh and model.
pub fn verify_suite(config: &RunConfig) -> Result<Vec<Check>> {
    let params = config.model_params();
    let mesh = Arc::new(ChannelMesh::build(&config.channel_geometry())?);
    let space = Arc::new(MixedSpace::taylor_hood(mesh));
    let n = space.n_velocity();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = Vec::new();

    checks.push(Check::at_most("skew-symmetry of b", skew_symmetry_defect(&space, 20, 1), 1e-12));

    let a = forms::assemble_a(&space, params.nu);
    let g = forms::assemble_g(&space, params.nu, params.d);
    let scale = |m: &crate::sparse::CscMatrix| m.values().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    checks.push(Check::at_most("symmetry of a", a.asymmetry() / scale(&a), 1e-14));
    checks.push(Check::at_most("symmetry of G", g.asymmetry() / scale(&g).max(f64::MIN_POSITIVE), 1e-14));

    let mut c_min = f64::INFINITY;
    for _ in 0..10 {
        let z = random_vector(&mut rng, n);
        let v = random_vector(&mut rng, n);
        let c = forms::assemble_c(&space, &z, &params)?;
        let s: f64 = c.triplets().map(|(i, j, x)| (x * v[i] * v[j]).abs()).sum();
        let q = c.form(&v, &v);
        c_min = c_min.min(if s > 0.0 { q / s } else { 0.0 });
    }
    checks.push(Check::at_least("non-negativity of c", c_min, -1e-12));

    checks.push(Check::at_most(
        "wall-law round trip",
        wall_law_round_trip(&params, 1000, 3)?,
        1e-10,
    ));
    let friction = params.friction()?;
    let ratio = |s: f64| -> Result<f64> {
        use crate::wall_law::FrictionLaw;
        Ok(friction.friction_velocity(s, 0.5)? / s)
    };
    checks.push(Check::flag("u*/s decreasing on [1e3, 1e6]", ratio(1e6)? < ratio(1e3)?));

    let case = ManufacturedCase {
        nu: params.nu,
        d: params.d,
        angle: config.physics.angle,
    };
    checks.push(Check::at_most(
        "manufactured PDE and wall residual",
        manufactured_residual(&case, 100, 5),
        1e-12,
    ));

    let (solution, report) = picard_solve(&space, &params, &config.solver)?;
    checks.push(Check::flag("picard converged", report.converged));
    checks.push(Check::at_most("energy identity", report.energy_residual, ENERGY_TOL));
    let div = forms::assemble_divergence(&space).mul_vec(&solution.velocity);
    let vnorm = dot(&solution.velocity, &solution.velocity).sqrt().max(f64::MIN_POSITIVE);
    checks.push(Check::at_most(
        "discrete divergence",
        div.iter().fold(0.0f64, |m, d| m.max(d.abs())) / vnorm,
        1e-10,
    ));
    checks.push(Check::at_least("inf-sup constant", estimate_infsup(&space)?, 1e-3));
    Ok(checks)
}
