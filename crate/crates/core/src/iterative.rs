//! Iterative linear solvers for meshes too large to factorize directly:
//! a two-grid cycle on nested quadratic velocity spaces, preconditioned
//! conjugate gradients and flexible GMRES.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::ChannelMesh;
use crate::space::{MixedSpace, VelocityOrder};
use crate::sparse::{dot, CholeskySolver, CscMatrix, LuSolver, Pattern};

/// Interpolation from a coarse velocity space into a nested fine one.
pub(crate) struct Transfer {
    /// Fine-by-coarse prolongation.
    p: CscMatrix,
    /// Its transpose.
    pt: CscMatrix,
    coarse_pattern: Arc<Pattern>,
}

impl Transfer {
    pub fn new(fine: &MixedSpace, coarse: &MixedSpace) -> Result<Self> {
        let nf = fine.n_velocity();
        let nc = coarse.n_velocity();
        let cmesh = coarse.mesh();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        for (node, &x) in fine.node_coords().iter().enumerate() {
            let (e, lambda) = cmesh
                .locate(x)
                .ok_or_else(|| Error::InvalidMesh(format!("fine node {node} outside the coarse mesh")))?;
            let g = coarse.geometry(e);
            let sh = g.shape(coarse.velocity_order(), &lambda);
            let (cdofs, n) = coarse.element_velocity_dofs(e);
            for c in 0..3 {
                let Some(row) = fine.velocity_dof(node, c) else { continue };
                for a in 0..n / 3 {
                    let w = sh.values[a];
                    if w.abs() < 1e-13 {
                        continue;
                    }
                    if let Some(col) = cdofs[3 * a + c] {
                        cols[col].push((row, w));
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern::from_columns(
            nf,
            cols.iter().map(|c| c.iter().map(|&(r, _)| r).collect()).collect(),
        ));
        let mut p = CscMatrix::zeros(pattern);
        for (col, entries) in cols.iter().enumerate() {
            for &(row, w) in entries {
                // Each fine node is visited once.
                if p.get(row, col) == 0.0 {
                    p.add(row, col, w);
                }
            }
        }
        let pt = p.transpose();
        Ok(Self {
            p,
            pt,
            coarse_pattern: Arc::new(coarse.velocity_pattern()),
        })
    }

    /// Galerkin coarse operator `P^T A P`, restricted to the coarse velocity pattern.
    pub fn galerkin(&self, a: &CscMatrix) -> CscMatrix {
        let nf = self.p.nrows();
        let nc = self.p.ncols();
        let mut out = CscMatrix::zeros(self.coarse_pattern.clone());
        let mut fine_acc = vec![0.0; nf];
        let mut fine_touched = Vec::new();
        let mut fine_mark = vec![false; nf];
        let mut coarse_acc = vec![0.0; nc];
        let mut coarse_touched = Vec::new();
        let mut coarse_mark = vec![false; nc];
        for col in 0..nc {
            for (j, pj) in self.p.column(col) {
                for (i, aij) in a.column(j) {
                    if !fine_mark[i] {
                        fine_mark[i] = true;
                        fine_touched.push(i);
                    }
                    fine_acc[i] += aij * pj;
                }
            }
            for &i in &fine_touched {
                let v = fine_acc[i];
                for (row, pi) in self.pt.column(i) {
                    if !coarse_mark[row] {
                        coarse_mark[row] = true;
                        coarse_touched.push(row);
                    }
                    coarse_acc[row] += pi * v;
                }
                fine_acc[i] = 0.0;
                fine_mark[i] = false;
            }
            fine_touched.clear();
            coarse_touched.sort_unstable();
            for &row in &coarse_touched {
                if self.coarse_pattern.slot(row, col).is_some() {
                    out.add(row, col, coarse_acc[row]);
                }
                coarse_acc[row] = 0.0;
                coarse_mark[row] = false;
            }
            coarse_touched.clear();
        }
        out
    }

    pub fn prolong(&self, xc: &[f64]) -> Vec<f64> {
        self.p.mul_vec(xc)
    }

    pub fn restrict(&self, xf: &[f64]) -> Vec<f64> {
        self.pt.mul_vec(xf)
    }
}

enum CoarseSolver {
    Cholesky(CholeskySolver),
    Lu(LuSolver),
}

/// Two-grid cycle: Gauss-Seidel smoothing on the fine level and an exact
/// solve with the Galerkin operator on the coarse level. Forward sweeps
/// before and backward sweeps after the correction make the cycle symmetric
/// for symmetric operators.
pub(crate) struct TwoGrid {
    transfer: Arc<Transfer>,
    a: CscMatrix,
    /// Transpose of `a`: its columns are the rows of `a`.
    rows: CscMatrix,
    diag: Vec<f64>,
    coarse: CoarseSolver,
    sweeps: usize,
}

impl TwoGrid {
    pub fn new(transfer: Arc<Transfer>, a: CscMatrix, symmetric: bool, sweeps: usize) -> Result<Self> {
        let ac = transfer.galerkin(&a);
        let coarse = if symmetric {
            CoarseSolver::Cholesky(CholeskySolver::new(&ac)?)
        } else {
            let mut lu = LuSolver::new(ac.pattern().clone())?;
            lu.factorize(&ac)?;
            CoarseSolver::Lu(lu)
        };
        let diag: Vec<f64> = (0..a.nrows()).map(|i| a.get(i, i)).collect();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::SingularSystem("non-positive diagonal entry in smoother".into()));
        }
        Ok(Self {
            transfer,
            rows: a.transpose(),
            a,
            diag,
            coarse,
            sweeps,
        })
    }

    pub fn matrix(&self) -> &CscMatrix {
        &self.a
    }

    fn sweep(&self, x: &mut [f64], b: &[f64], forward: bool) {
        let n = x.len();
        let mut visit = |i: usize| {
            let mut s = b[i];
            for (j, aij) in self.rows.column(i) {
                if j != i {
                    s -= aij * x[j];
                }
            }
            x[i] = s / self.diag[i];
        };
        if forward {
            (0..n).for_each(&mut visit);
        } else {
            (0..n).rev().for_each(&mut visit);
        }
    }

    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; b.len()];
        for _ in 0..self.sweeps {
            self.sweep(&mut x, b, true);
        }
        let ax = self.a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rc = self.transfer.restrict(&r);
        let ec = match &self.coarse {
            CoarseSolver::Cholesky(c) => c.solve(&rc),
            CoarseSolver::Lu(lu) => lu.solve(&rc)?,
        };
        let e = self.transfer.prolong(&ec);
        x.iter_mut().zip(&e).for_each(|(x, e)| *x += e);
        for _ in 0..self.sweeps {
            self.sweep(&mut x, b, false);
        }
        Ok(x)
    }
}

/// Preconditioned conjugate gradients from a zero initial guess; stops when
/// `||r|| <= tol ||b||`.
pub(crate) fn pcg(
    a: &CscMatrix,
    b: &[f64],
    precond: impl Fn(&[f64]) -> Result<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z = precond(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let alpha = rz / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        z = precond(&r)?;
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::SingularSystem(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Restarted flexible GMRES with right preconditioning. Stops when the
/// residual norm falls below `abs_tol` or `rel_tol` times the initial
/// residual, after `max_iter` inner iterations, or when a restart cycle
/// fails to halve the residual (rounding floor).
pub(crate) fn fgmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: Vec<f64>,
    abs_tol: f64,
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresOutcome> {
    let mut x = x0;
    let mut total = 0;
    let mut tol = abs_tol;
    let mut previous = f64::INFINITY;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = dot(&r, &r).sqrt();
        if total == 0 {
            tol = tol.max(rel_tol * beta);
        }
        if beta <= tol || total >= max_iter || beta > 0.5 * previous {
            return Ok(GmresOutcome {
                x,
                iterations: total,
            });
        }
        previous = beta;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && total < max_iter {
            let zk = precond(&v[k])?;
            let mut w = apply(&zk);
            z.push(zk);
            let mut hk = vec![0.0; k + 2];
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(&w, vi);
                    hk[i] += c;
                    w.iter_mut().zip(vi).for_each(|(w, v)| *w -= c * v);
                }
            }
            let wn = dot(&w, &w).sqrt();
            hk[k + 1] = wn;
            for i in 0..k {
                let t = cs[i] * hk[i] + sn[i] * hk[i + 1];
                hk[i + 1] = -sn[i] * hk[i] + cs[i] * hk[i + 1];
                hk[i] = t;
            }
            let rho = hk[k].hypot(hk[k + 1]);
            let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (hk[k] / rho, hk[k + 1] / rho) };
            cs.push(c);
            sn.push(s);
            hk[k] = rho;
            hk[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            h.push(hk);
            k += 1;
            total += 1;
            if g[k].abs() <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        // back substitution for the k x k upper-triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x.iter_mut().zip(zi).for_each(|(x, z)| *x += yi * z);
        }
    }
}

/// Coarse space of the same element pair on the halved mesh, with the
/// transfer into `space`.
pub(crate) fn coarse_transfer(space: &MixedSpace) -> Result<Option<Arc<Transfer>>> {
    let Some(coarse) = coarsen(space.mesh()) else {
        return Ok(None);
    };
    let coarse = Arc::new(coarse);
    let coarse = match space.velocity_order() {
        VelocityOrder::Quadratic => MixedSpace::taylor_hood(coarse),
        VelocityOrder::Linear => MixedSpace::equal_order_unstable(coarse),
    };
    Ok(Some(Arc::new(Transfer::new(space, &coarse)?)))
}

/// Solver for a symmetric positive definite velocity matrix: sparse
/// Cholesky, or conjugate gradients preconditioned by a two-grid cycle.
pub(crate) enum SpdSolver {
    Direct(CholeskySolver),
    TwoGrid(TwoGrid),
}

impl SpdSolver {
    pub fn new(a: CscMatrix, transfer: Option<Arc<Transfer>>) -> Result<Self> {
        Ok(match transfer {
            None => SpdSolver::Direct(CholeskySolver::new(&a)?),
            Some(t) => SpdSolver::TwoGrid(TwoGrid::new(t, a, true, 2)?),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Direct(c) => Ok(c.solve(b)),
            SpdSolver::TwoGrid(tg) => pcg(tg.matrix(), b, |r| tg.apply(r), 1e-9, 500),
        }
    }
}

/// The coarse mesh with half the subdivisions in every direction, if the
/// mesh family admits it.
pub(crate) fn coarsen(mesh: &ChannelMesh) -> Option<ChannelMesh> {
    let mut g = mesh.geometry().clone();
    if g.n1 % 2 != 0 || g.n2 % 2 != 0 || g.n3 % 2 != 0 || g.n1 < 4 || g.n2 < 4 || g.n3 < 4 {
        return None;
    }
    g.n1 /= 2;
    g.n2 /= 2;
    g.n3 /= 2;
    let coarse = ChannelMesh::build(&g).ok()?;
    // Nestedness: every coarse plane must be a fine plane.
    let fine_z = mesh.z_planes();
    let nested = coarse
        .z_planes()
        .iter()
        .all(|z| fine_z.iter().any(|f| (f - z).abs() <= 1e-12));
    nested.then_some(coarse)
}

/// Velocity coefficients of a coarse field interpolated into the fine space
/// (used in tests of the transfer).
#[cfg(test)]
fn interpolate_coarse(fine: &MixedSpace, coarse: &MixedSpace, xc: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fine.n_velocity()];
    for (node, &x) in fine.node_coords().iter().enumerate() {
        let (e, lambda) = coarse.mesh().locate(x).unwrap();
        let sh = coarse.geometry(e).shape(coarse.velocity_order(), &lambda);
        let local = crate::solution::local_velocity(coarse, e, xc);
        let (v, _) = crate::solution::velocity_and_gradient(&sh, &local);
        for c in 0..3 {
            if let Some(d) = fine.velocity_dof(node, c) {
                out[d] = v[c];
            }
        }
    }
    out
}
