//! Manufactured solutions, error measurement, inf-sup estimation and
//! refinement studies.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{self, for_each_element};
use crate::mesh::{ChannelGeometry, ChannelMesh};
use crate::params::{BodyForce, ModelParams};
use crate::quadrature::TetRule;
use crate::solution::{local_velocity, velocity_and_gradient, DiscreteSolution};
use crate::solver::{picard_solve, SolverConfig, SolverReport};
use crate::space::MixedSpace;
use crate::iterative::{coarse_transfer, SpdSolver};
use crate::sparse::{dot, CholeskySolver, CscMatrix};

/// Exact solution `v = (sin(pi x3) + pi d) (cos phi, sin phi, 0)`, `p = 0` of
/// the Navier-Stokes equations with Navier slip walls, and its forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub nu: f64,
    pub d: f64,
    /// Direction `phi` of the velocity in the `(x1, x2)` plane.
    pub angle: f64,
}

pub fn make_manufactured_case(nu: f64, d: f64) -> ManufacturedCase {
    ManufacturedCase { nu, d, angle: 0.0 }
}

impl ManufacturedCase {
    pub fn rotated(mut self, angle: f64) -> Self {
        self.angle = angle;
        self
    }

    fn direction(&self) -> [f64; 3] {
        [self.angle.cos(), self.angle.sin(), 0.0]
    }

    pub fn velocity(&self, x: [f64; 3]) -> [f64; 3] {
        let u = (PI * x[2]).sin() + PI * self.d;
        self.direction().map(|e| u * e)
    }

    /// `grad[i][j] = d_j v_i`.
    pub fn gradient(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        let du = PI * (PI * x[2]).cos();
        let e = self.direction();
        [[0.0, 0.0, du * e[0]], [0.0, 0.0, du * e[1]], [0.0; 3]]
    }

    pub fn laplacian(&self, x: [f64; 3]) -> [f64; 3] {
        let u = -PI * PI * (PI * x[2]).sin();
        self.direction().map(|e| u * e)
    }

    pub fn pressure(&self, _x: [f64; 3]) -> f64 {
        0.0
    }

    pub fn force(&self) -> BodyForce {
        BodyForce::manufactured(self.nu, self.angle)
    }

    /// Model parameters matching the case with layer thickness `D`.
    pub fn params(&self, layer_thickness: f64) -> ModelParams {
        ModelParams::new(self.nu, self.d, layer_thickness).with_force(self.force())
    }

    /// `||v||_{1,2}^2 = L^2 (1/2 + 4d + pi^2 d^2 + pi^2/2)` on a box of side `L`.
    pub fn h1_norm_squared(&self, box_length: f64) -> f64 {
        let d = self.d;
        box_length * box_length * (0.5 + 4.0 * d + PI * PI * d * d + 0.5 * PI * PI)
    }

    /// `a(v, v) + G(v, v) = nu L^2 pi^2 (1/2 + 2d)`.
    pub fn energy_norm_squared(&self, box_length: f64) -> f64 {
        self.nu * box_length * box_length * PI * PI * (0.5 + 2.0 * self.d)
    }
}

/// `||v_h - v||_{1,2}` and `||p_h - p||_{0,2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

/// Measures the errors against `case` with a degree-8 quadrature rule.
pub fn measure_errors(solution: &DiscreteSolution, case: &ManufacturedCase) -> ErrorNorms {
    let space = solution.space();
    let rule = TetRule::collapsed(8);
    let mut v_err = 0.0;
    let mut p_err = 0.0;
    let _ = for_each_element(
        space.mesh().n_elements(),
        |e| {
            let g = space.geometry(e);
            let local = local_velocity(space, e, &solution.velocity);
            let p = space.element_pressure(e).map(|q| solution.pressure[q]);
            let mut acc = [0.0; 2];
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                let x = g.point(l);
                let sh = g.shape(space.velocity_order(), l);
                let (v, gv) = velocity_and_gradient(&sh, &local);
                let (ve, ge) = (case.velocity(x), case.gradient(x));
                let mut s = 0.0;
                for i in 0..3 {
                    s += (v[i] - ve[i]).powi(2);
                    for j in 0..3 {
                        s += (gv[i][j] - ge[i][j]).powi(2);
                    }
                }
                let ph: f64 = (0..4).map(|a| l[a] * p[a]).sum();
                let wt = w * g.volume;
                acc[0] += wt * s;
                acc[1] += wt * (ph - case.pressure(x)).powi(2);
            }
            Ok(acc)
        },
        |_, acc| {
            v_err += acc[0];
            p_err += acc[1];
        },
    );
    ErrorNorms {
        velocity_h1: v_err.sqrt(),
        pressure_l2: p_err.sqrt(),
    }
}

/// Discrete inf-sup constant
/// `beta_h = min_q max_v (div v, q) / (||v||_{1,2} ||q||_{0,2})` over zero-mean `q`.
///
/// Computed as the square root of the smallest eigenvalue of the pressure
/// Schur complement `D H^{-1} D^T` relative to the pressure mass matrix, with
/// `H` the `H^1` Gram matrix. Small problems use a dense eigensolver, larger
/// ones a Lanczos iteration.
pub fn estimate_infsup(space: &MixedSpace) -> Result<f64> {
    if space.n_pressure() <= DENSE_LIMIT {
        InfSup::new(space)?.dense()
    } else {
        InfSup::new(space)?.lanczos(300, 1e-4, 7)
    }
}

const DENSE_LIMIT: usize = 1500;
const GRAM_DIRECT_LIMIT: usize = 20_000;

#[doc(hidden)]
pub struct InfSup {
    div: CscMatrix,
    h1: SpdSolver,
    mass: CscMatrix,
    mass_solver: CholeskySolver,
    /// `M 1 / sqrt(1^T M 1)`: the constant mode in dual form.
    constant: Vec<f64>,
    lift: f64,
}

impl InfSup {
    pub fn new(space: &MixedSpace) -> Result<Self> {
        let div = forms::assemble_divergence(space);
        let transfer = if space.n_velocity() > GRAM_DIRECT_LIMIT {
            coarse_transfer(space)?
        } else {
            None
        };
        let h1 = SpdSolver::new(forms::assemble_h1_gram(space), transfer)?;
        let mass = forms::assemble_pressure_mass(space);
        let mass_solver = CholeskySolver::new(&mass)?;
        let ones = vec![1.0; space.n_pressure()];
        let m1 = mass.mul_vec(&ones);
        let total = dot(&ones, &m1).sqrt();
        let constant = m1.iter().map(|v| v / total).collect();
        Ok(Self {
            div,
            h1,
            mass,
            mass_solver,
            constant,
            lift: 10.0,
        })
    }

    /// `(D H^{-1} D^T + lift * c c^T) q`.
    fn apply(&self, q: &[f64]) -> Result<Vec<f64>> {
        let u = self.h1.solve(&self.div.mul_vec_transpose(q))?;
        let mut s = self.div.mul_vec(&u);
        let cq = dot(&self.constant, q);
        for (si, ci) in s.iter_mut().zip(&self.constant) {
            *si += self.lift * cq * ci;
        }
        Ok(s)
    }

    pub fn dense(&self) -> Result<f64> {
        Ok(self.spectrum()?[0].max(0.0).sqrt())
    }

    /// All eigenvalues of the shifted Schur complement in the mass metric, ascending.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let np = self.mass.nrows();
        let nv = self.div.ncols();
        let mut block = vec![0.0; nv * np];
        for (r, c, v) in self.div.triplets() {
            block[c + r * nv] = v;
        }
        match &self.h1 {
            SpdSolver::Direct(c) => c.solve_block(&mut block, np),
            solver => {
                for col in block.chunks_mut(nv) {
                    let x = solver.solve(col)?;
                    col.copy_from_slice(&x);
                }
            }
        }
        let mut s = Mat::<f64>::zeros(np, np);
        for j in 0..np {
            let col = self.div.mul_vec(&block[j * nv..(j + 1) * nv]);
            for i in 0..np {
                s[(i, j)] = col[i] + self.lift * self.constant[i] * self.constant[j];
            }
        }
        let s = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (s[(i, j)] + s[(j, i)]));
        let m = Mat::<f64>::from_fn(np, np, |i, j| self.mass.get(i, j));
        let llt = m.llt(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let l = llt.L();
        // C = L^{-1} S L^{-T}
        let mut c = s.clone();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), faer::Par::Seq);
        let mut ct = c.transpose().to_owned();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, ct.as_mut(), faer::Par::Seq);
        let sym = Mat::<f64>::from_fn(np, np, |i, j| 0.5 * (ct[(i, j)] + ct[(j, i)]));
        let eig = sym
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let mut values: Vec<f64> = eig.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Ok(values)
    }

    /// Lanczos iteration in the mass inner product with full reorthogonalization.
    pub fn lanczos(&self, max_steps: usize, tol: f64, seed: u64) -> Result<f64> {
        let np = self.mass.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q: Vec<f64> = (0..np).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dot(&q, &self.mass.mul_vec(&q)).sqrt();
        q.iter_mut().for_each(|v| *v /= norm);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut mbasis: Vec<Vec<f64>> = Vec::new();
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut last = f64::NAN;
        for k in 0..max_steps.min(np) {
            let mq = self.mass.mul_vec(&q);
            let w = self.apply(&q)?;
            let mut u = self.mass_solver.solve(&w);
            let a = dot(&q, &w);
            basis.push(q.clone());
            mbasis.push(mq);
            alpha.push(a);
            for _ in 0..2 {
                for (b, mb) in basis.iter().zip(&mbasis) {
                    let c = dot(&u, mb);
                    u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = dot(&u, &self.mass.mul_vec(&u)).max(0.0).sqrt();
            let (theta, tail) = tridiagonal_min(&alpha, &beta)?;
            let converged = (b * tail).abs() <= tol * theta.abs().max(1e-300);
            if converged || b <= 1e-14 || k + 1 == max_steps.min(np) {
                return Ok(theta.max(0.0).sqrt());
            }
            if (theta - last).abs() <= 1e-14 * theta.abs() && k > 20 {
                return Ok(theta.max(0.0).sqrt());
            }
            last = theta;
            beta.push(b);
            q = u.iter().map(|v| v / b).collect();
        }
        Err(Error::Eigen("Lanczos iteration produced no estimate".into()))
    }
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix and the last component of its eigenvector.
fn tridiagonal_min(alpha: &[f64], beta: &[f64]) -> Result<(f64, f64)> {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = eig.S();
    let u = eig.U();
    let mut best = 0;
    for i in 1..k {
        if s[i] < s[best] {
            best = i;
        }
    }
    Ok((s[best], u[(k - 1, best)]))
}

/// Per-level ratios `sup nu_t / (h^{1/2} ||v_h||_{1,2})` and whether they stay within a factor 4.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NutBound {
    pub ratios: Vec<f64>,
    pub spread: f64,
    pub bounded: bool,
}

/// Evaluates the sup-norm bound of the eddy viscosity on a refinement sequence
/// given as `(h, sup nu_t, ||v_h||_{1,2})` per level.
pub fn check_nut_supnorm_bound(levels: &[(f64, f64, f64)]) -> Result<NutBound> {
    if levels.len() < 3 {
        return Err(Error::Precondition(format!(
            "need at least 3 refinement levels, got {}",
            levels.len()
        )));
    }
    let ratios: Vec<f64> = levels
        .iter()
        .map(|&(h, sup, norm)| if sup == 0.0 { 0.0 } else { sup / (h.sqrt() * norm) })
        .collect();
    let spread = spread(&ratios);
    Ok(NutBound {
        bounded: spread <= 4.0,
        spread,
        ratios,
    })
}

/// `max / min` of a sequence; 1 for an all-zero sequence.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 && min == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Observed orders `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` between consecutive levels.
pub fn observed_orders(h: &[f64], values: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(values.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Least-squares slope of `log value` against `log h`.
pub fn fitted_order(h: &[f64], values: &[f64]) -> f64 {
    let n = h.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub err_v_h1: f64,
    pub err_p_l2: f64,
    pub c_vv: f64,
    pub sup_nut: f64,
    pub energy_residual: f64,
    pub beta_h: f64,
    pub n: usize,
    pub velocity_h1: f64,
    pub energy_norm: f64,
    pub apriori_ratio: f64,
    pub pressure_l2: f64,
    pub pressure_ratio: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

pub const CSV_COLUMNS: [&str; 7] = ["h", "err_v_h1", "err_p_l2", "c_vv", "sup_nut", "energy_residual", "beta_h"];

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.h, r.err_v_h1, r.err_p_l2, r.c_vv, r.sup_nut, r.energy_residual, r.beta_h
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn column(&self, f: impl Fn(&ConvergenceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Options of a refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    /// Coarsest subdivision count; level `k` uses `coarsest * 2^k`.
    pub coarsest: usize,
    pub levels: usize,
    /// Estimate the inf-sup constant on every level.
    pub infsup: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            coarsest: 4,
            levels: 3,
            infsup: true,
        }
    }
}

/// Result of [`run_convergence_study`].
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub table: ConvergenceTable,
    pub reports: Vec<SolverReport>,
    pub solutions: Vec<DiscreteSolution>,
    /// Set when some level did not converge; the table stops at that level.
    pub failed: bool,
}

/// Summary checks on a finished study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyChecks {
    pub errors_decreasing: bool,
    pub error_orders: Vec<f64>,
    pub c_vv_order: f64,
    pub c_vv_decreasing: bool,
    pub nut: NutBound,
    pub apriori_spread: f64,
    pub pressure_bounded: bool,
    pub energy_gap_shrinking: bool,
    pub max_energy_residual: f64,
}

impl ConvergenceStudy {
    pub fn checks(&self, case: &ManufacturedCase, box_length: f64) -> Result<StudyChecks> {
        let rows = &self.table.rows;
        let h = self.table.column(|r| r.h);
        let err = self.table.column(|r| r.err_v_h1);
        let c = self.table.column(|r| r.c_vv);
        let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        let nut = check_nut_supnorm_bound(
            &rows
                .iter()
                .map(|r| (r.h, r.sup_nut, r.velocity_h1))
                .collect::<Vec<_>>(),
        )?;
        let exact = case.energy_norm_squared(box_length).sqrt();
        let gaps: Vec<f64> = rows.iter().map(|r| (r.energy_norm - exact).abs()).collect();
        let all_zero_c = c.iter().all(|&v| v == 0.0);
        Ok(StudyChecks {
            errors_decreasing: decreasing(&err),
            error_orders: observed_orders(&h, &err),
            c_vv_order: if all_zero_c { f64::INFINITY } else { fitted_order(&h, &c) },
            c_vv_decreasing: all_zero_c || decreasing(&c),
            nut,
            apriori_spread: spread(&self.table.column(|r| r.apriori_ratio)),
            pressure_bounded: rows
                .iter()
                .all(|r| r.pressure_l2.is_finite() && r.pressure_ratio <= 1.0),
            energy_gap_shrinking: decreasing(&gaps),
            max_energy_residual: rows.iter().map(|r| r.energy_residual).fold(0.0, f64::max),
        })
    }
}

/// Solves `case` on meshes with `coarsest * 2^k` cells per direction,
/// `k = 0..levels`, all other geometry taken from `geometry`.
pub fn run_convergence_study(
    case: &ManufacturedCase,
    geometry: &ChannelGeometry,
    params: &ModelParams,
    config: &SolverConfig,
    options: &StudyOptions,
) -> Result<ConvergenceStudy> {
    if options.levels < 3 {
        return Err(Error::Precondition(format!(
            "a convergence study needs at least 3 levels, got {}",
            options.levels
        )));
    }
    let params = params.clone().with_force(case.force());
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut solutions = Vec::new();
    let mut failed = false;
    for k in 0..options.levels {
        let n = options.coarsest << k;
        let mut g = geometry.clone();
        g.n1 = n;
        g.n2 = n;
        g.n3 = n;
        let mesh = Arc::new(ChannelMesh::build(&g)?);
        let space = Arc::new(MixedSpace::taylor_hood(mesh.clone()));
        let (solution, report) = picard_solve(&space, &params, config)?;
        let errors = measure_errors(&solution, case);
        let beta_h = if options.infsup { estimate_infsup(&space)? } else { f64::NAN };
        rows.push(ConvergenceRow {
            h: mesh.h(),
            err_v_h1: errors.velocity_h1,
            err_p_l2: errors.pressure_l2,
            c_vv: report.energy.eddy,
            sup_nut: forms::sup_norm_nut(&space, &solution.velocity, &params)?,
            energy_residual: report.energy_residual,
            beta_h,
            n,
            velocity_h1: report.apriori.velocity_h1,
            energy_norm: (report.energy.viscous + report.energy.friction).sqrt(),
            apriori_ratio: report.apriori.ratio,
            pressure_l2: report.apriori.pressure_l2,
            pressure_ratio: report.apriori.pressure_ratio,
            iterations: report.iterations,
            converged: report.converged,
        });
        let converged = report.converged;
        reports.push(report);
        solutions.push(solution);
        if !converged {
            failed = true;
            break;
        }
    }
    Ok(ConvergenceStudy {
        table: ConvergenceTable { rows },
        reports,
        solutions,
        failed,
    })
}
