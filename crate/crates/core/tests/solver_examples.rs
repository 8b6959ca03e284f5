use std::sync::Arc;

use channel_les::solver::{apriori_check, energy_terms, picard_solve, LinearSolver, SolverConfig};
use channel_les::verification::make_manufactured_case;
use channel_les::*;

fn space(g: &ChannelGeometry) -> Arc<MixedSpace> {
    Arc::new(MixedSpace::taylor_hood(Arc::new(ChannelMesh::build(g).unwrap())))
}

fn tight() -> SolverConfig {
    SolverConfig {
        picard_tol: 1e-12,
        residual_tol: 1e-13,
        ..SolverConfig::default()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&d) / max_abs(b).max(f64::MIN_POSITIVE)
}

#[test]
fn zero_force_gives_zero_fields_after_one_iteration() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let params = ModelParams::new(0.1, 0.01, 0.2).with_force(BodyForce::zero());
    let (sol, report) = picard_solve(&s, &params, &SolverConfig::default()).unwrap();
    assert_eq!(report.iterations, 1);
    assert!(report.converged);
    assert!(sol.velocity.iter().all(|&v| v == 0.0));
    assert!(sol.pressure.iter().all(|&p| p == 0.0));
    assert_eq!(report.energy_residual, 0.0);
}

#[test]
fn manufactured_solve_balances_energy() {
    let case = make_manufactured_case(0.1, 0.01);
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let params = case.params(0.2).with_constants(0.1, 0.1);
    let (sol, report) = picard_solve(&s, &params, &SolverConfig::default()).unwrap();
    assert!(report.converged);
    assert!(report.energy_residual <= 1e-10, "{}", report.energy_residual);
    assert!(report.energy.eddy > 0.0);
    let direct = energy_terms(&sol, &params).unwrap();
    assert_eq!(direct, report.energy);
    assert_eq!(apriori_check(&report), report.apriori.ratio);
    assert!(report.divergence <= 1e-12);
    assert!(report.increments.len() == report.iterations);
    assert!(report.residuals.len() == report.iterations);
}

#[test]
fn scaling_equivalence_without_wall_viscosity() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let force = BodyForce::Constant([1.0, 0.3, 0.5]);
    let base = ModelParams::new(0.1, 0.01, 0.2).with_constants(0.1, 0.0).with_force(force);
    let factor = 10.0;
    let mut scaled = base.clone().with_force(force.scaled(factor * factor));
    scaled.nu *= factor;
    let (a, ra) = picard_solve(&s, &base, &tight()).unwrap();
    let (b, rb) = picard_solve(&s, &scaled, &tight()).unwrap();
    assert!(ra.converged && rb.converged);
    let va: Vec<f64> = a.velocity.iter().map(|v| factor * v).collect();
    let pa: Vec<f64> = a.pressure.iter().map(|p| factor * factor * p).collect();
    assert!(max_abs(&pa) > 1e-3);
    assert!(rel_diff(&b.velocity, &va) <= 1e-8, "{}", rel_diff(&b.velocity, &va));
    assert!(rel_diff(&b.pressure, &pa) <= 1e-8, "{}", rel_diff(&b.pressure, &pa));
}

#[test]
fn two_grid_solver_matches_sparse_lu() {
    let mut g = ChannelGeometry::aligned(1.0, 4, 0.2, 0.01);
    g.n3 = 8;
    let s = space(&g);
    let case = make_manufactured_case(0.1, 0.01).rotated(0.4);
    let params = case.params(0.2).with_constants(0.1, 0.1);
    let lu = SolverConfig {
        linear_solver: LinearSolver::SparseLu,
        ..tight()
    };
    let tg = SolverConfig {
        linear_solver: LinearSolver::TwoGrid,
        ..tight()
    };
    let (a, ra) = picard_solve(&s, &params, &lu).unwrap();
    let (b, rb) = picard_solve(&s, &params, &tg).unwrap();
    assert!(ra.converged && rb.converged);
    assert!(rb.linear_iterations.iter().any(|&k| k > 0));
    assert!(ra.linear_iterations.iter().all(|&k| k == 0));
    assert!(rel_diff(&b.velocity, &a.velocity) <= 1e-9);
    assert!((ra.energy.work - rb.energy.work).abs() <= 1e-10 * ra.energy.work);
}

#[test]
fn two_grid_solver_needs_a_coarsenable_mesh() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let params = make_manufactured_case(0.1, 0.01).params(0.2);
    let tg = SolverConfig {
        linear_solver: LinearSolver::TwoGrid,
        ..SolverConfig::default()
    };
    assert!(matches!(picard_solve(&s, &params, &tg), Err(Error::Precondition(_))));
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let params = make_manufactured_case(0.1, 0.01).params(0.2).with_constants(0.1, 0.1);
    let (a, ra) = picard_solve(&s, &params, &SolverConfig::default()).unwrap();
    let (b, rb) = picard_solve(&s, &params, &SolverConfig::default()).unwrap();
    assert_eq!(a.velocity, b.velocity);
    assert_eq!(a.pressure, b.pressure);
    assert_eq!(ra.to_json().unwrap(), rb.to_json().unwrap());
}

#[test]
fn iteration_budget_exhaustion_is_reported() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let params = make_manufactured_case(0.1, 0.01).params(0.2).with_constants(0.1, 0.1);
    let cfg = SolverConfig {
        max_picard: 1,
        ..SolverConfig::default()
    };
    let (_, report) = picard_solve(&s, &params, &cfg).unwrap();
    assert_eq!(report.iterations, 1);
    assert!(!report.converged);
}

#[test]
fn inconsistent_inputs_are_rejected() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let wrong_d = ModelParams::new(0.1, 0.02, 0.2);
    assert!(matches!(
        picard_solve(&s, &wrong_d, &SolverConfig::default()),
        Err(Error::Precondition(_))
    ));
    let unaligned = space(&ChannelGeometry::uniform(1.0, 4, 0.2, 0.01));
    let params = ModelParams::new(0.1, 0.01, 0.2);
    assert!(matches!(
        picard_solve(&unaligned, &params, &SolverConfig::default()),
        Err(Error::Precondition(_))
    ));
    let bad = SolverConfig {
        damping: 0.0,
        ..SolverConfig::default()
    };
    assert!(matches!(
        picard_solve(&s, &params, &bad),
        Err(Error::InvalidParameter { name: "damping", .. })
    ));
}

#[test]
fn report_json_has_the_documented_keys() {
    let s = space(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01));
    let params = make_manufactured_case(0.1, 0.01).params(0.2);
    let (_, report) = picard_solve(&s, &params, &SolverConfig::default()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert!(v["iterations"].is_u64());
    assert!(v["increments"].is_array());
    assert!(v["residuals"].is_array());
    for key in ["viscous", "friction", "eddy", "work"] {
        assert!(v["energy"][key].is_f64(), "{key}");
    }
    for key in ["ratio", "kappa"] {
        assert!(v["apriori"][key].is_f64(), "{key}");
    }
}
