use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use channel_les::config::RunConfig;
use channel_les::run::{run, skew_symmetry_defect, Check};
use channel_les::solver::{picard_solve, SolverConfig, SolverReport};
use channel_les::verification::{
    estimate_infsup, make_manufactured_case, InfSup, run_convergence_study, spread, ConvergenceStudy, StudyOptions,
};
use channel_les::wall_law::FrictionLaw;
use channel_les::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NU: f64 = 0.1;
const SUBLAYER: f64 = 0.01;
const LAYER: f64 = 0.2;
const KERNEL_TOL: f64 = 1e-10;

struct Criterion {
    id: usize,
    checks: Vec<Check>,
    seconds: f64,
}

impl Criterion {
    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn print(&self) {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let detail: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}{} = {:.4e} (limit {:e})", if c.passed { "" } else { "!" }, c.name, c.value, c.limit))
            .collect();
        println!("{status} criterion {}: {} [{:.1} s]", self.id, detail.join("; "), self.seconds);
    }
}

fn criterion(id: usize, body: impl FnOnce() -> Result<Vec<Check>>) -> Criterion {
    let start = Instant::now();
    let checks = body().unwrap_or_else(|e| vec![Check::flag(&format!("error: {e}"), false)]);
    Criterion {
        id,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn aligned_space(n: usize) -> Result<Arc<MixedSpace>> {
    let mesh = ChannelMesh::build(&ChannelGeometry::aligned(1.0, n, LAYER, SUBLAYER))?;
    Ok(Arc::new(MixedSpace::taylor_hood(Arc::new(mesh))))
}

fn study(coefficient: f64) -> Result<ConvergenceStudy> {
    let case = make_manufactured_case(NU, SUBLAYER);
    let params = case.params(LAYER).with_constants(coefficient, coefficient);
    let options = StudyOptions {
        coarsest: 4,
        levels: 3,
        infsup: false,
    };
    let geometry = ChannelGeometry::aligned(1.0, 4, LAYER, SUBLAYER);
    run_convergence_study(&case, &geometry, &params, &SolverConfig::default(), &options)
}

fn converged<'a>(reports: impl IntoIterator<Item = &'a SolverReport>) -> Vec<f64> {
    reports.into_iter().filter(|r| r.converged).map(|r| r.energy_residual).collect()
}

fn loaded(s: &Result<ConvergenceStudy>) -> Result<&ConvergenceStudy> {
    s.as_ref().map_err(|e| Error::Precondition(format!("study failed: {e}")))
}

fn min(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    max_abs(&d) / max_abs(b).max(f64::MIN_POSITIVE)
}

fn main() -> ExitCode {
    let mut energy_residuals: Vec<f64> = Vec::new();
    let mut results = Vec::new();

    results.push(criterion(1, || {
        let defect = skew_symmetry_defect(&*aligned_space(4)?, 100, 1);
        Ok(vec![Check::at_most("max |(B(z)v,v)| / sum |B_ij v_i v_j|", defect, 1e-12)])
    }));

    results.push(criterion(3, || {
        let law = WallLaw::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let beta = 10f64.powf(rng.random_range(-4.0..2.0));
            let alpha = 10f64.powf(rng.random_range(-2.0..4.0));
            let back = law.invert(law.forward(beta, alpha)?, alpha, 1e-14, 200)?;
            let err = (back - beta).abs();
            worst = worst.max(err.max(err / beta));
        }
        let friction = ModelParams::new(NU, SUBLAYER, LAYER).friction()?;
        let mut sublinear = true;
        for x3 in [0.01, 0.05, 0.25, 0.5] {
            let r = |s: f64| -> Result<f64> { Ok(friction.friction_velocity(s, x3)? / s) };
            sublinear &= r(1e6)? < r(1e3)?;
        }
        Ok(vec![
            Check::at_most("round trip max(abs, rel) over 1000 pairs", worst, 1e-10),
            Check::flag("u*(s)/s decreasing from 1e3 to 1e6", sublinear),
        ])
    }));

    let mut studies: Vec<(f64, Result<ConvergenceStudy>)> = Vec::new();
    let start = Instant::now();
    for coefficient in [0.0, 0.1] {
        studies.push((coefficient, study(coefficient)));
    }
    let study_seconds = start.elapsed().as_secs_f64();
    for (_, s) in &studies {
        if let Ok(s) = s {
            energy_residuals.extend(converged(s.reports.iter()));
        }
    }
    let case = make_manufactured_case(NU, SUBLAYER);

    let mut c4 = criterion(4, || {
        let mut checks = Vec::new();
        for (cs, s) in &studies {
            let s = loaded(s)?;
            let checks_s = s.checks(&case, 1.0)?;
            checks.push(Check::flag(&format!("Cs=Cw={cs}: all levels converged"), !s.failed));
            checks.push(Check::flag(
                &format!("Cs=Cw={cs}: err_v_h1 strictly decreasing"),
                checks_s.errors_decreasing,
            ));
            checks.push(Check::at_least(
                &format!("Cs=Cw={cs}: min observed order"),
                min(checks_s.error_orders.iter().copied()),
                1.0,
            ));
        }
        Ok(checks)
    });
    c4.seconds = study_seconds;
    results.push(c4);

    results.push(criterion(5, || {
        let (_, s) = &studies[1];
        let s = loaded(s)?;
        let checks_s = s.checks(&case, 1.0)?;
        Ok(vec![
            Check::flag("c(v_h;v_h) decreasing", checks_s.c_vv_decreasing),
            Check::at_least("c(v_h;v_h) h-rate", checks_s.c_vv_order, 0.5),
            Check::at_most("sup nu_t / (h^1/2 |v_h|_1) spread", checks_s.nut.spread, 4.0),
        ])
    }));

    results.push(criterion(6, || {
        let uniform = |n: usize| -> Result<Arc<ChannelMesh>> {
            Ok(Arc::new(ChannelMesh::build(&ChannelGeometry::uniform(1.0, n, LAYER, SUBLAYER))?))
        };
        let mut stable = Vec::new();
        let mut unstable = Vec::new();
        let mut reduced = Vec::new();
        for n in [2, 4, 8] {
            stable.push(estimate_infsup(&MixedSpace::taylor_hood(uniform(n)?))?);
            let control = InfSup::new(&MixedSpace::equal_order_unstable(uniform(n)?))?.spectrum()?;
            unstable.push(control[0].max(0.0).sqrt());
            let top = control[control.len() - 1];
            let nonzero = control.iter().copied().find(|&l| l > KERNEL_TOL * top).unwrap_or(0.0);
            reduced.push(nonzero.sqrt());
        }
        Ok(vec![
            Check::at_most("Taylor-Hood beta_h max/min - 1", spread(&stable) - 1.0, 0.2),
            Check::at_most("P1/P1 largest beta_h", unstable.iter().copied().fold(0.0, f64::max), 1e-6),
            Check::at_least("P1/P1 smallest nonzero singular value, n=2 over n=8", reduced[0] / reduced[2], 2.0),
        ])
    }));

    results.push(criterion(7, || {
        let mut checks = Vec::new();
        for (cs, s) in &studies {
            let s = loaded(s)?;
            let checks_s = s.checks(&case, 1.0)?;
            checks.push(Check::at_most(
                &format!("Cs=Cw={cs}: a-priori ratio spread"),
                checks_s.apriori_spread,
                2.0,
            ));
            checks.push(Check::flag(&format!("Cs=Cw={cs}: pressure bounded"), checks_s.pressure_bounded));
        }
        Ok(checks)
    }));

    results.push(criterion(8, || {
        let space = aligned_space(4)?;
        let force = BodyForce::Constant([1.0, 0.3, 0.5]);
        let base = ModelParams::new(NU, SUBLAYER, LAYER).with_constants(0.1, 0.0).with_force(force);
        let s = 10.0;
        let mut scaled = base.clone().with_force(force.scaled(s * s));
        scaled.nu *= s;
        let config = SolverConfig {
            picard_tol: 1e-12,
            residual_tol: 1e-13,
            ..SolverConfig::default()
        };
        let (a, ra) = picard_solve(&space, &base, &config)?;
        let (b, rb) = picard_solve(&space, &scaled, &config)?;
        let va: Vec<f64> = a.velocity.iter().map(|v| s * v).collect();
        let pa: Vec<f64> = a.pressure.iter().map(|p| s * s * p).collect();
        let checks = vec![
            Check::flag("both solves converged", ra.converged && rb.converged),
            Check::at_most("|v_s - s v| / |s v|", rel_diff(&b.velocity, &va), 1e-8),
            Check::at_most("|p_s - s^2 p| / |s^2 p|", rel_diff(&b.pressure, &pa), 1e-8),
        ];
        energy_residuals.extend(converged([&ra, &rb]));
        Ok(checks)
    }));

    results.push(criterion(9, || {
        let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
        let mut outputs = Vec::new();
        for dir in &dirs {
            let mut config = RunConfig::default();
            config.output.directory = dir.path().to_path_buf();
            let outcome = run(&config)?;
            let report = std::fs::read(dir.path().join("report.json"))?;
            let fields = std::fs::read(dir.path().join("solution.vtk"))?;
            let parsed: serde_json::Value = serde_json::from_slice(&report)?;
            if parsed["converged"] == true {
                energy_residuals.extend(parsed["energy_residual"].as_f64());
            }
            outputs.push((outcome.success, report, fields));
        }
        Ok(vec![
            Check::flag("solve succeeded", outputs.iter().all(|o| o.0)),
            Check::flag("report.json byte-identical", outputs[0].1 == outputs[1].1),
            Check::flag("solution.vtk byte-identical", outputs[0].2 == outputs[1].2),
        ])
    }));

    let mut c2 = criterion(2, || {
        let worst = energy_residuals.iter().copied().fold(0.0, f64::max);
        Ok(vec![
            Check::at_least("converged solves checked", energy_residuals.len() as f64, 10.0),
            Check::at_most("max relative energy residual", worst, 1e-10),
        ])
    });
    c2.seconds = 0.0;
    results.push(c2);

    results.sort_by_key(|c| c.id);
    for c in &results {
        c.print();
    }
    if results.iter().all(Criterion::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
