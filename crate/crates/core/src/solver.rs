//! Damped Picard iteration for the discrete nonlinear saddle-point problem.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::forms::{
    self, add_momentum, add_saddle_coupling, add_wall_friction, eddy_viscosity, ConvectionForm, Momentum,
};
use crate::params::ModelParams;
use crate::solution::DiscreteSolution;
use crate::space::MixedSpace;
use crate::iterative::{coarse_transfer, fgmres, SpdSolver, Transfer, TwoGrid};
use crate::sparse::{dot, CholeskySolver, CscMatrix, LuSolver};

/// Linear solver used inside each Picard step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    /// Sparse LU on small meshes, two-grid GMRES on large ones.
    #[default]
    Auto,
    /// Sparse LU of the full saddle-point matrix.
    SparseLu,
    /// Flexible GMRES on the saddle-point system, preconditioned by a
    /// two-grid cycle on the velocity block and the scaled pressure mass
    /// matrix. Needs even subdivisions that preserve the grading.
    TwoGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Threshold on the relative energy-norm increment.
    pub picard_tol: f64,
    /// Threshold on the relative dual-norm residual.
    pub residual_tol: f64,
    pub max_picard: usize,
    /// Initial damping factor in `(0, 1]`.
    pub damping: f64,
    pub linear_solver: LinearSolver,
    #[doc(hidden)]
    pub convection: ConvectionForm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            picard_tol: 1e-9,
            residual_tol: 1e-10,
            max_picard: 50,
            damping: 1.0,
            linear_solver: LinearSolver::Auto,
            convection: ConvectionForm::Skew,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) {
            return Err(invalid("picard_tol", format!("must be > 0, got {}", self.picard_tol)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(invalid("residual_tol", format!("must be > 0, got {}", self.residual_tol)));
        }
        if self.max_picard == 0 {
            return Err(invalid("max_picard", "must be >= 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", format!("must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Terms of the energy identity `a(v,v) + G(v,v) + c(v;v) = <f,v>`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyTerms {
    /// `a(v, v) = 2 nu ||Dv||^2`.
    pub viscous: f64,
    /// `G(v, v) = (nu / d) ||v_tau||^2` on the walls.
    pub friction: f64,
    /// `c(v; v)`.
    pub eddy: f64,
    /// `<f, v>`.
    pub work: f64,
}

impl EnergyTerms {
    /// `|viscous + friction + eddy - work| / max(work, eps)`.
    pub fn residual(&self) -> f64 {
        let imbalance = (self.viscous + self.friction + self.eddy - self.work).abs();
        if imbalance == 0.0 {
            return 0.0;
        }
        imbalance / self.work.max(f64::MIN_POSITIVE)
    }
}

/// Quantities entering the a-priori estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AprioriData {
    /// `||v_h||_{1,2} kappa / ||f||_{0,2}`.
    pub ratio: f64,
    /// `min(nu, nu / d)`.
    pub kappa: f64,
    pub velocity_h1: f64,
    pub force_l2: f64,
    pub pressure_l2: f64,
    /// `||p_h||_{0,2}` divided by the bound expression of the pressure estimate.
    pub pressure_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative energy-norm increments, one per iteration.
    pub increments: Vec<f64>,
    /// Relative dual-norm residuals, one per iteration.
    pub residuals: Vec<f64>,
    pub energy: EnergyTerms,
    pub energy_residual: f64,
    pub apriori: AprioriData,
    /// Largest `|(div v_h, q_i)|` over pressure basis functions.
    pub divergence: f64,
    pub damping: f64,
    /// GMRES iterations per linear solve (zero for direct solves).
    pub linear_iterations: Vec<usize>,
}

impl SolverReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `||v_h||_{1,2} kappa / ||f||_{0,2}` from a report (zero for zero forcing).
pub fn apriori_check(report: &SolverReport) -> f64 {
    let a = &report.apriori;
    if a.force_l2 == 0.0 {
        0.0
    } else {
        a.velocity_h1 * a.kappa / a.force_l2
    }
}

/// Evaluates the terms of the energy identity directly from the field.
pub fn energy_terms(solution: &DiscreteSolution, params: &ModelParams) -> Result<EnergyTerms> {
    let space = solution.space();
    let v = &solution.velocity;
    let i = forms::field_integrals(space, v);
    Ok(EnergyTerms {
        viscous: 2.0 * params.nu * i.strain,
        friction: params.nu / params.d * i.wall,
        eddy: forms::eddy_dissipation(space, v, params)?,
        work: forms::work(space, v, &params.force),
    })
}

/// Relative imbalance of the energy identity at `solution`.
pub fn energy_balance(solution: &DiscreteSolution, params: &ModelParams) -> Result<f64> {
    Ok(energy_terms(solution, params)?.residual())
}

fn check_consistency(space: &MixedSpace, params: &ModelParams) -> Result<()> {
    let g = space.mesh().geometry();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(g.sublayer, params.d) || !close(g.layer_thickness, params.layer_thickness) {
        return Err(Error::Precondition(format!(
            "mesh built for D = {}, d = {} but parameters have D = {}, d = {}",
            g.layer_thickness, g.sublayer, params.layer_thickness, params.d
        )));
    }
    if !space.mesh().interface_aligned() {
        return Err(Error::Precondition(
            "wall-layer interface is not resolved by the mesh; use aligned grading".into(),
        ));
    }
    Ok(())
}

/// Velocity unknowns above which `LinearSolver::Auto` switches to the
/// iterative solver.
const AUTO_DIRECT_LIMIT: usize = 5_000;
const SMOOTHING_SWEEPS: usize = 2;
const GMRES_RESTART: usize = 60;
const GMRES_REDUCTION: f64 = 1e-6;
const GMRES_MAX_ITER: usize = 600;

enum Backend {
    Direct {
        base: CscMatrix,
        lu: LuSolver,
    },
    Iterative {
        base: CscMatrix,
        div: CscMatrix,
        transfer: Arc<Transfer>,
    },
}

enum Operator {
    Saddle(CscMatrix),
    Velocity(TwoGrid),
}

struct Problem<'a> {
    space: &'a MixedSpace,
    params: &'a ModelParams,
    config: &'a SolverConfig,
    backend: Backend,
    h1: SpdSolver,
    energy: CscMatrix,
    rhs: Vec<f64>,
    mass: CholeskySolver,
    force_dual: f64,
    linear_tol: f64,
    linear_iterations: Vec<usize>,
}

fn choose_backend(space: &MixedSpace, config: &SolverConfig) -> Result<Option<Arc<Transfer>>> {
    match config.linear_solver {
        LinearSolver::SparseLu => Ok(None),
        LinearSolver::Auto if space.n_velocity() <= AUTO_DIRECT_LIMIT => Ok(None),
        LinearSolver::Auto => coarse_transfer(space),
        LinearSolver::TwoGrid => coarse_transfer(space)?.map(Some).ok_or_else(|| {
            Error::Precondition("two-grid solver needs even subdivisions that preserve the grading".into())
        }),
    }
}

impl<'a> Problem<'a> {
    fn new(space: &'a MixedSpace, params: &'a ModelParams, config: &'a SolverConfig) -> Result<Self> {
        let nv = space.n_velocity();
        let np = space.n_pressure();
        let stokes = Momentum {
            nu: params.nu,
            ..Default::default()
        };
        let mut energy = CscMatrix::zeros(Arc::new(space.velocity_pattern()));
        add_momentum(space, &stokes, &mut energy)?;
        add_wall_friction(space, params.nu / params.d, &mut energy);
        let h1_gram = forms::assemble_h1_gram(space);

        let transfer = choose_backend(space, config)?;
        let h1 = SpdSolver::new(h1_gram, transfer.clone())?;
        let backend = match transfer {
            None => {
                let mut base = CscMatrix::zeros(Arc::new(space.saddle_pattern()));
                add_momentum(space, &stokes, &mut base)?;
                add_wall_friction(space, params.nu / params.d, &mut base);
                add_saddle_coupling(space, &mut base);
                Backend::Direct {
                    lu: LuSolver::new(base.pattern().clone())?,
                    base,
                }
            }
            Some(transfer) => Backend::Iterative {
                base: energy.clone(),
                div: forms::assemble_divergence(space),
                transfer,
            },
        };

        let rhs_v = forms::assemble_rhs(space, &params.force);
        let mass = CholeskySolver::new(&forms::assemble_pressure_mass(space))?;
        let mut problem = Self {
            space,
            params,
            config,
            backend,
            h1,
            energy,
            rhs: Vec::new(),
            mass,
            force_dual: 0.0,
            linear_iterations: Vec::new(),
            linear_tol: (0.01 * config.residual_tol.min(config.picard_tol)).max(1e-13),
        };
        problem.force_dual = problem.dual_h1(&rhs_v)?.sqrt();
        problem.rhs = rhs_v;
        problem.rhs.resize(nv + np + 1, 0.0);
        Ok(problem)
    }

    /// `r^T H^{-1} r` with `H` the velocity H1 Gram matrix.
    fn dual_h1(&self, r: &[f64]) -> Result<f64> {
        Ok(dot(r, &self.h1.solve(r)?).max(0.0))
    }

    /// Linear operator with convection and eddy viscosity frozen at `z`;
    /// `None` gives the Stokes operator.
    fn operator(&self, z: Option<&[f64]>) -> Result<Operator> {
        let base = match &self.backend {
            Backend::Direct { base, .. } | Backend::Iterative { base, .. } => base,
        };
        let mut sys = base.clone();
        if let Some(z) = z {
            let lagged = self.params.cs > 0.0 || self.params.cw > 0.0;
            let nut = if lagged {
                Some(eddy_viscosity(self.space, z, self.params)?)
            } else {
                None
            };
            let m = Momentum {
                nu: 0.0,
                eddy: nut.as_ref(),
                advecting: Some((z, self.config.convection)),
            };
            add_momentum(self.space, &m, &mut sys)?;
        }
        Ok(match &self.backend {
            Backend::Direct { .. } => Operator::Saddle(sys),
            Backend::Iterative { transfer, .. } => {
                Operator::Velocity(TwoGrid::new(transfer.clone(), sys, false, SMOOTHING_SWEEPS)?)
            }
        })
    }

    /// Velocity and pressure parts of `rhs - op x`.
    fn residual_parts(&self, op: &Operator, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nv = self.space.n_velocity();
        let np = self.space.n_pressure();
        match (op, &self.backend) {
            (Operator::Saddle(sys), _) => {
                let ax = sys.mul_vec(x);
                let r: Vec<f64> = self.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                (r[..nv].to_vec(), r[nv..nv + np].to_vec())
            }
            (Operator::Velocity(k), Backend::Iterative { div, .. }) => {
                let (v, p) = (&x[..nv], &x[nv..nv + np]);
                let kv = k.matrix().mul_vec(v);
                let dtp = div.mul_vec_transpose(p);
                let rv = (0..nv).map(|i| self.rhs[i] - kv[i] + dtp[i]).collect();
                let rp = div.mul_vec(v).iter().map(|d| -d).collect();
                (rv, rp)
            }
            (Operator::Velocity(_), Backend::Direct { .. }) => unreachable!("operator built by this backend"),
        }
    }

    fn energy_norm(&self, v: &[f64]) -> f64 {
        self.energy.form(v, v).max(0.0).sqrt()
    }

    /// Relative dual norm of `rhs - op x`.
    fn residual(&self, op: &Operator, x: &[f64]) -> Result<f64> {
        let (rv, rp) = self.residual_parts(op, x);
        let norm = (self.dual_h1(&rv)? + dot(&rp, &self.mass.solve(&rp))).max(0.0).sqrt();
        Ok(if self.force_dual > 0.0 { norm / self.force_dual } else { norm })
    }

    /// Solves `op x = rhs`, starting from `x0` where that helps.
    fn solve(&mut self, op: &Operator, x0: &[f64]) -> Result<Vec<f64>> {
        let nv = self.space.n_velocity();
        let np = self.space.n_pressure();
        match (op, &mut self.backend) {
            (Operator::Saddle(sys), Backend::Direct { lu, .. }) => {
                lu.factorize(sys)?;
                self.linear_iterations.push(0);
                lu.solve(&self.rhs)
            }
            (Operator::Velocity(k), Backend::Iterative { div, .. }) => {
                let nu = self.params.nu;
                let mass = &self.mass;
                let div = &*div;
                let apply = |y: &[f64]| {
                    let (v, p) = y.split_at(nv);
                    let mut out = k.matrix().mul_vec(v);
                    let dtp = div.mul_vec_transpose(p);
                    out.iter_mut().zip(&dtp).for_each(|(o, d)| *o -= d);
                    out.extend(div.mul_vec(v).iter().map(|d| -d));
                    out
                };
                let precond = |r: &[f64]| -> Result<Vec<f64>> {
                    let (rv, rp) = r.split_at(nv);
                    let p: Vec<f64> = mass.solve(rp).iter().map(|x| -nu * x).collect();
                    let dtp = div.mul_vec_transpose(&p);
                    let shifted: Vec<f64> = rv.iter().zip(&dtp).map(|(a, b)| a + b).collect();
                    let mut out = k.apply(&shifted)?;
                    out.extend(p);
                    Ok(out)
                };
                let b = &self.rhs[..nv + np];
                let tol = self.linear_tol * dot(b, b).sqrt();
                let outcome = fgmres(
                    apply,
                    precond,
                    b,
                    x0[..nv + np].to_vec(),
                    tol,
                    GMRES_REDUCTION,
                    GMRES_RESTART,
                    GMRES_MAX_ITER,
                )?;
                self.linear_iterations.push(outcome.iterations);
                let mut x = outcome.x;
                let w = self.space.pressure_mean_weights();
                let mean = dot(&x[nv..], w) / w.iter().sum::<f64>();
                x[nv..].iter_mut().for_each(|p| *p -= mean);
                x.push(0.0);
                Ok(x)
            }
            _ => unreachable!("operator built by this backend"),
        }
    }
}

/// Solves the discrete model by Picard iteration.
///
/// The first iterate is the Stokes solution (viscous and wall-friction terms
/// only). Each further step freezes the advecting field and the eddy
/// viscosity at the current iterate, solves the linear saddle-point problem
/// and relaxes the update with the damping factor. Iteration stops once both
/// the relative energy-norm increment and the relative residual are below
/// their tolerances. Running out of iterations is not an error: the report
/// then has `converged == false`.
pub fn picard_solve(
    space: &Arc<MixedSpace>,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<(DiscreteSolution, SolverReport)> {
    params.validate()?;
    config.validate()?;
    check_consistency(space, params)?;
    let nv = space.n_velocity();
    let np = space.n_pressure();
    let mut problem = Problem::new(space, params, config)?;

    let zero = vec![0.0; nv + np + 1];
    let stokes = problem.operator(None)?;
    let mut x = problem.solve(&stokes, &zero)?;
    drop(stokes);
    let mut increments = vec![if x[..nv].iter().any(|&v| v != 0.0) { 1.0 } else { 0.0 }];
    let mut residuals = Vec::new();
    let mut theta = config.damping;
    let mut iterations = 1;
    let converged = loop {
        let op = problem.operator(Some(&x[..nv]))?;
        let res = problem.residual(&op, &x)?;
        residuals.push(res);
        let inc = *increments.last().expect("non-empty");
        if inc <= config.picard_tol && res <= config.residual_tol {
            break true;
        }
        if iterations >= config.max_picard {
            break false;
        }
        let target = problem.solve(&op, &x)?;
        drop(op);
        let next: Vec<f64> = x.iter().zip(&target).map(|(a, b)| a + theta * (b - a)).collect();
        let diff: Vec<f64> = next[..nv].iter().zip(&x[..nv]).map(|(a, b)| a - b).collect();
        let scale = problem.energy_norm(&next[..nv]);
        let step = problem.energy_norm(&diff);
        let inc = if step == 0.0 { 0.0 } else { step / scale.max(f64::MIN_POSITIVE) };
        let n = increments.len();
        if n >= 2 && inc > increments[n - 1] && increments[n - 1] > increments[n - 2] {
            theta = (0.5 * theta).max(1.0 / 16.0);
        }
        increments.push(inc);
        x = next;
        iterations += 1;
    };

    let mut solution = DiscreteSolution::new(space.clone(), x[..nv].to_vec(), x[nv..nv + np].to_vec());
    let mean = solution.pressure_mean();
    solution.pressure.iter_mut().for_each(|p| *p -= mean);

    let energy = energy_terms(&solution, params)?;
    let div = forms::assemble_divergence(space).mul_vec(&solution.velocity);
    let integrals = forms::field_integrals(space, &solution.velocity);
    let force_l2 = forms::force_l2_norm(space, &params.force);
    let pressure_l2 = dot(&solution.pressure, &forms::assemble_pressure_mass(space).mul_vec(&solution.pressure))
        .max(0.0)
        .sqrt();
    let kappa = params.coercivity();
    let fk = force_l2 / kappa;
    let pressure_bound = fk * (fk * (1.0 + space.mesh().h().sqrt()) + params.nu + 1.0 / params.d + 1.0);
    let mut report = SolverReport {
        iterations,
        converged,
        increments,
        residuals,
        energy,
        energy_residual: energy.residual(),
        apriori: AprioriData {
            ratio: 0.0,
            kappa,
            velocity_h1: integrals.h1_norm(),
            force_l2,
            pressure_l2,
            pressure_ratio: if pressure_bound > 0.0 { pressure_l2 / pressure_bound } else { 0.0 },
        },
        divergence: div.iter().fold(0.0, |m, v| m.max(v.abs())),
        damping: theta,
        linear_iterations: problem.linear_iterations,
    };
    report.apriori.ratio = apriori_check(&report);
    Ok((solution, report))
}
