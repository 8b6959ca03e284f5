//! Discrete forms of the model and their sparse assembly.
//!
//! Velocity operators act on the constrained velocity coefficient vector of a
//! [`MixedSpace`] (periodic, impermeable walls). Local element matrices are
//! computed in parallel and scattered into the global matrix in element
//! order, so assembled values do not depend on the thread count.

use rayon::prelude::*;

use crate::error::Result;
use crate::mesh::{wall_distance, Region};
use crate::params::{BodyForce, CVariant, ModelParams};
use crate::quadrature::TetRule;
use crate::solution::{local_velocity, velocity_and_gradient};
use crate::space::{MixedSpace, ShapeValues};
use crate::sparse::CscMatrix;
use crate::wall_law::FrictionLaw;
use std::sync::Arc;

/// How the convective term is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvectionForm {
    /// `1/2 [((z.grad) v, w) - ((z.grad) w, v)]`.
    #[default]
    Skew,
    /// `((z.grad) v, w)`, not energy-conserving on discretely divergence-free fields.
    #[doc(hidden)]
    Advective,
}

type LocalMatrix = [[f64; 30]; 30];

const CHUNK: usize = 256;

/// Runs `compute` for every element in parallel chunks and hands the results
/// to `scatter` in increasing element order.
pub(crate) fn for_each_element<L, F, S>(n: usize, compute: F, mut scatter: S) -> Result<()>
where
    L: Send,
    F: Fn(usize) -> Result<L> + Sync,
    S: FnMut(usize, L),
{
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let locals: Vec<Result<L>> = (start..end).into_par_iter().map(&compute).collect();
        for (e, local) in (start..end).zip(locals) {
            scatter(e, local?);
        }
        start = end;
    }
    Ok(())
}

/// Quadrature data of one element.
pub(crate) struct ElementQuadrature {
    pub shapes: Vec<ShapeValues>,
    /// Physical weights (summing to the element volume).
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

impl ElementQuadrature {
    pub fn new(space: &MixedSpace, e: usize, rule: &TetRule) -> Self {
        let geometry = space.geometry(e);
        let order = space.velocity_order();
        let shapes = rule.points.iter().map(|l| geometry.shape(order, l)).collect();
        let weights = rule.weights.iter().map(|w| w * geometry.volume).collect();
        let points = rule.points.iter().map(|l| geometry.point(l)).collect();
        Self {
            shapes,
            weights,
            points,
        }
    }
}

fn scatter_local(target: &mut CscMatrix, space: &MixedSpace, e: usize, local: &LocalMatrix) {
    let (dofs, n) = space.element_velocity_dofs(e);
    for j in 0..n {
        let Some(col) = dofs[j] else { continue };
        for i in 0..n {
            if let Some(row) = dofs[i] {
                let v = local[i][j];
                if v != 0.0 {
                    target.add(row, col, v);
                }
            }
        }
    }
}

/// `coef * (D phi_j, D phi_i)` accumulated for all local basis pairs.
fn add_strain(m: &mut LocalMatrix, sh: &ShapeValues, coef: f64) {
    let half = 0.5 * coef;
    for a in 0..sh.n {
        let ga = sh.gradients[a];
        for b in 0..sh.n {
            let gb = sh.gradients[b];
            let gg = ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2];
            for c in 0..3 {
                m[3 * a + c][3 * b + c] += half * gg;
                for e in 0..3 {
                    m[3 * a + c][3 * b + e] += half * (ga[e] * gb[c]);
                }
            }
        }
    }
}

/// `coef * (d3 phi_j, d3 phi_i)`.
fn add_normal_derivative(m: &mut LocalMatrix, sh: &ShapeValues, coef: f64) {
    for a in 0..sh.n {
        for b in 0..sh.n {
            let v = coef * (sh.gradients[a][2] * sh.gradients[b][2]);
            for c in 0..3 {
                m[3 * a + c][3 * b + c] += v;
            }
        }
    }
}

fn add_convection(m: &mut LocalMatrix, sh: &ShapeValues, z: [f64; 3], weight: f64, form: ConvectionForm) {
    let mut zg = [0.0; 10];
    for a in 0..sh.n {
        let g = sh.gradients[a];
        zg[a] = z[0] * g[0] + z[1] * g[1] + z[2] * g[2];
    }
    for a in 0..sh.n {
        for b in 0..sh.n {
            let v = match form {
                ConvectionForm::Skew => 0.5 * weight * (sh.values[a] * zg[b] - sh.values[b] * zg[a]),
                ConvectionForm::Advective => weight * sh.values[a] * zg[b],
            };
            for c in 0..3 {
                m[3 * a + c][3 * b + c] += v;
            }
        }
    }
}

fn add_h1(m: &mut LocalMatrix, sh: &ShapeValues, weight: f64) {
    for a in 0..sh.n {
        let ga = sh.gradients[a];
        for b in 0..sh.n {
            let gb = sh.gradients[b];
            let v = weight * (ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2] + sh.values[a] * sh.values[b]);
            for c in 0..3 {
                m[3 * a + c][3 * b + c] += v;
            }
        }
    }
}

fn mirror_upper(m: &mut LocalMatrix) {
    for i in 0..30 {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
}

/// Eddy viscosity sampled at the volume quadrature points of every element.
#[derive(Debug, Clone)]
pub struct EddyViscosity {
    per_element: usize,
    values: Vec<f64>,
    variant: CVariant,
}

impl EddyViscosity {
    /// Value at quadrature point `q` of element `e`.
    pub fn at(&self, e: usize, q: usize) -> f64 {
        self.values[e * self.per_element + q]
    }

    pub fn variant(&self) -> CVariant {
        self.variant
    }

    /// Largest value over all quadrature points.
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Quadrature-weighted average over element `e`.
    pub fn element_mean(&self, space: &MixedSpace, e: usize) -> f64 {
        let w = &space.volume_rule().weights;
        (0..self.per_element).map(|q| w[q] * self.at(e, q)).sum::<f64>() / w.iter().sum::<f64>()
    }
}

/// Smagorinsky-type interior eddy viscosity `Cs^2 h_K^2 |Dv|` (Frobenius norm).
pub fn eddy_viscosity_in(grad: &[[f64; 3]; 3], h_k: f64, cs: f64) -> f64 {
    cs * cs * h_k * h_k * sym_grad_norm(grad)
}

/// Wall-layer eddy viscosity `Cw h_K u*(|v|, x)`.
pub fn eddy_viscosity_wall(
    speed: f64,
    wall_dist: f64,
    h_k: f64,
    cw: f64,
    law: &impl FrictionLaw,
) -> Result<f64> {
    if cw == 0.0 || speed == 0.0 {
        return Ok(0.0);
    }
    Ok(cw * h_k * law.friction_velocity(speed, wall_dist)?)
}

/// Frobenius norm of the symmetric part of `grad`.
pub fn sym_grad_norm(grad: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = 0.5 * (grad[i][j] + grad[j][i]);
            s += d * d;
        }
    }
    s.sqrt()
}

fn speed(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Evaluates the eddy viscosity of `velocity` at every volume quadrature point,
/// using the element diameter and region of each element.
pub fn eddy_viscosity(space: &MixedSpace, velocity: &[f64], params: &ModelParams) -> Result<EddyViscosity> {
    let mesh = space.mesh();
    let rule = space.volume_rule();
    let nq = rule.len();
    let friction = params.friction()?;
    let mut values = Vec::with_capacity(mesh.n_elements() * nq);
    for_each_element(
        mesh.n_elements(),
        |e| {
            let h = mesh.diameters()[e];
            let region = mesh.regions()[e];
            let mut out = Vec::with_capacity(nq);
            if (region == Region::Interior && params.cs == 0.0) || (region == Region::WallLayer && params.cw == 0.0) {
                out.resize(nq, 0.0);
                return Ok(out);
            }
            let quad = ElementQuadrature::new(space, e, rule);
            let local = local_velocity(space, e, velocity);
            for (sh, x) in quad.shapes.iter().zip(&quad.points) {
                let (v, g) = velocity_and_gradient(sh, &local);
                out.push(match region {
                    Region::Interior => eddy_viscosity_in(&g, h, params.cs),
                    Region::WallLayer => {
                        eddy_viscosity_wall(speed(v), wall_distance(x[2], params.d), h, params.cw, &friction)?
                    }
                });
            }
            Ok(out)
        },
        |_, out| values.extend(out),
    )?;
    Ok(EddyViscosity {
        per_element: nq,
        values,
        variant: params.variant,
    })
}

/// Contributions to a momentum operator.
#[derive(Clone, Copy, Default)]
pub(crate) struct Momentum<'a> {
    /// `nu` of the viscous form `2 nu (Dv, Dw)`.
    pub nu: f64,
    pub eddy: Option<&'a EddyViscosity>,
    pub advecting: Option<(&'a [f64], ConvectionForm)>,
}

fn momentum_local(space: &MixedSpace, e: usize, m: &Momentum) -> LocalMatrix {
    let rule = space.volume_rule();
    let quad = ElementQuadrature::new(space, e, rule);
    let region = space.mesh().regions()[e];
    let mut sym = [[0.0; 30]; 30];
    for (q, (sh, &w)) in quad.shapes.iter().zip(&quad.weights).enumerate() {
        let mut strain = 2.0 * m.nu;
        let mut normal = 0.0;
        if let Some(eddy) = m.eddy {
            let nut = eddy.at(e, q);
            match (eddy.variant, region) {
                (CVariant::NormalOnly, Region::WallLayer) => normal = nut,
                _ => strain += nut,
            }
        }
        if strain != 0.0 {
            add_strain(&mut sym, sh, w * strain);
        }
        if normal != 0.0 {
            add_normal_derivative(&mut sym, sh, w * normal);
        }
    }
    mirror_upper(&mut sym);
    if let Some((z, form)) = m.advecting {
        let local = local_velocity(space, e, z);
        for (sh, &w) in quad.shapes.iter().zip(&quad.weights) {
            let (zq, _) = velocity_and_gradient(sh, &local);
            add_convection(&mut sym, sh, zq, w, form);
        }
    }
    sym
}

/// Adds the momentum operator into `target`, whose leading block is indexed by velocity dofs.
pub(crate) fn add_momentum(space: &MixedSpace, m: &Momentum, target: &mut CscMatrix) -> Result<()> {
    for_each_element(
        space.mesh().n_elements(),
        |e| Ok(momentum_local(space, e, m)),
        |e, local| scatter_local(target, space, e, &local),
    )
}

/// Adds `coef * (v_tau, w_tau)` over both walls.
pub(crate) fn add_wall_friction(space: &MixedSpace, coef: f64, target: &mut CscMatrix) {
    let rule = space.surface_rule();
    for face in space.mesh().wall_faces() {
        let g = space.geometry(face.element);
        let mut local = [[0.0; 30]; 30];
        for (mu, w) in rule.points.iter().zip(&rule.weights) {
            let sh = g.shape(space.velocity_order(), &space.face_point(face, mu));
            let wt = coef * w * face.area;
            for a in 0..sh.n {
                for b in 0..sh.n {
                    let v = wt * (sh.values[a] * sh.values[b]);
                    for c in 0..2 {
                        local[3 * a + c][3 * b + c] += v;
                    }
                }
            }
        }
        mirror_upper(&mut local);
        scatter_local(target, space, face.element, &local);
    }
}

fn velocity_matrix(space: &MixedSpace) -> CscMatrix {
    CscMatrix::zeros(Arc::new(space.velocity_pattern()))
}

/// Viscous operator `a(v, w) = 2 nu (Dv, Dw)`.
pub fn assemble_a(space: &MixedSpace, nu: f64) -> CscMatrix {
    let mut a = velocity_matrix(space);
    add_momentum(space, &Momentum { nu, ..Default::default() }, &mut a).expect("infallible");
    a
}

/// Skew-symmetric convection operator `B(z)` for the advecting velocity `z`.
pub fn assemble_b(space: &MixedSpace, advecting: &[f64]) -> CscMatrix {
    assemble_convection(space, advecting, ConvectionForm::Skew)
}

#[doc(hidden)]
pub fn assemble_convection(space: &MixedSpace, advecting: &[f64], form: ConvectionForm) -> CscMatrix {
    let mut b = velocity_matrix(space);
    let m = Momentum {
        advecting: Some((advecting, form)),
        ..Default::default()
    };
    add_momentum(space, &m, &mut b).expect("infallible");
    b
}

/// Wall friction operator `G(v, w) = (nu / d) (v_tau, w_tau)` on both walls.
pub fn assemble_g(space: &MixedSpace, nu: f64, d: f64) -> CscMatrix {
    let mut g = velocity_matrix(space);
    add_wall_friction(space, nu / d, &mut g);
    g
}

/// Turbulent diffusion operator `C(v)` with the eddy viscosity of `current` frozen.
pub fn assemble_c(space: &MixedSpace, current: &[f64], params: &ModelParams) -> Result<CscMatrix> {
    let nut = eddy_viscosity(space, current, params)?;
    let mut c = velocity_matrix(space);
    let m = Momentum {
        eddy: Some(&nut),
        ..Default::default()
    };
    add_momentum(space, &m, &mut c)?;
    Ok(c)
}

/// Divergence coupling `D[q, j] = (div phi_j, psi_q)`, pressure rows by velocity columns.
pub fn assemble_divergence(space: &MixedSpace) -> CscMatrix {
    let mut d = CscMatrix::zeros(Arc::new(space.divergence_pattern()));
    add_divergence_blocks(space, &mut d, 0, None, 1.0);
    d
}

/// Adds `scale * D` at row offset `row0` and, if `transpose_col0` is given, `scale * D^T`
/// at column offset `transpose_col0`.
fn add_divergence_blocks(
    space: &MixedSpace,
    target: &mut CscMatrix,
    row0: usize,
    transpose_col0: Option<usize>,
    scale: f64,
) {
    let rule = space.volume_rule();
    let _ = for_each_element(
        space.mesh().n_elements(),
        |e| {
            let quad = ElementQuadrature::new(space, e, rule);
            let mut local = [[0.0; 30]; 4];
            for (l, (sh, &w)) in rule.points.iter().zip(quad.shapes.iter().zip(&quad.weights)) {
                for q in 0..4 {
                    let pw = w * l[q];
                    for b in 0..sh.n {
                        for c in 0..3 {
                            local[q][3 * b + c] += pw * sh.gradients[b][c];
                        }
                    }
                }
            }
            Ok(local)
        },
        |e, local| {
            let (dofs, n) = space.element_velocity_dofs(e);
            let p = space.element_pressure(e);
            for (q, &pq) in p.iter().enumerate() {
                for j in 0..n {
                    if let Some(col) = dofs[j] {
                        let v = scale * local[q][j];
                        if v == 0.0 {
                            continue;
                        }
                        target.add(row0 + pq, col, v);
                        if let Some(c0) = transpose_col0 {
                            target.add(col, c0 + pq, v);
                        }
                    }
                }
            }
        },
    );
}

/// Adds `[[0, -D^T, 0], [-D, 0, m], [0, m^T, 0]]` to a saddle-point matrix.
pub(crate) fn add_saddle_coupling(space: &MixedSpace, target: &mut CscMatrix) {
    let nv = space.n_velocity();
    let np = space.n_pressure();
    add_divergence_blocks(space, target, nv, Some(nv), -1.0);
    for (q, &m) in space.pressure_mean_weights().iter().enumerate() {
        target.add(nv + q, nv + np, m);
        target.add(nv + np, nv + q, m);
    }
}

/// Load vector `(f, phi_i)`.
pub fn assemble_rhs(space: &MixedSpace, force: &BodyForce) -> Vec<f64> {
    let mut rhs = vec![0.0; space.n_velocity()];
    if force.is_zero() {
        return rhs;
    }
    let rule = space.volume_rule();
    let _ = for_each_element(
        space.mesh().n_elements(),
        |e| {
            let quad = ElementQuadrature::new(space, e, rule);
            let mut local = [0.0; 30];
            for ((sh, &w), &x) in quad.shapes.iter().zip(&quad.weights).zip(&quad.points) {
                let f = force.eval(x);
                for a in 0..sh.n {
                    for c in 0..3 {
                        local[3 * a + c] += w * f[c] * sh.values[a];
                    }
                }
            }
            Ok(local)
        },
        |e, local| {
            let (dofs, n) = space.element_velocity_dofs(e);
            for k in 0..n {
                if let Some(d) = dofs[k] {
                    rhs[d] += local[k];
                }
            }
        },
    );
    rhs
}

/// Gram matrix of the full `H^1` inner product `(grad v, grad w) + (v, w)`.
pub fn assemble_h1_gram(space: &MixedSpace) -> CscMatrix {
    let mut h = velocity_matrix(space);
    let rule = space.volume_rule();
    let _ = for_each_element(
        space.mesh().n_elements(),
        |e| {
            let quad = ElementQuadrature::new(space, e, rule);
            let mut m = [[0.0; 30]; 30];
            for (sh, &w) in quad.shapes.iter().zip(&quad.weights) {
                add_h1(&mut m, sh, w);
            }
            mirror_upper(&mut m);
            Ok(m)
        },
        |e, local| scatter_local(&mut h, space, e, &local),
    );
    h
}

/// Pressure mass matrix `(psi_j, psi_i)`.
pub fn assemble_pressure_mass(space: &MixedSpace) -> CscMatrix {
    let mut m = CscMatrix::zeros(Arc::new(space.pressure_pattern()));
    let mesh = space.mesh();
    for e in 0..mesh.n_elements() {
        let vol = mesh.volumes()[e];
        let p = space.element_pressure(e);
        for (a, &pa) in p.iter().enumerate() {
            for (b, &pb) in p.iter().enumerate() {
                m.add(pa, pb, vol * if a == b { 0.1 } else { 0.05 });
            }
        }
    }
    m
}

/// `sup nu_t(v)` over all volume quadrature points.
pub fn sup_norm_nut(space: &MixedSpace, current: &[f64], params: &ModelParams) -> Result<f64> {
    Ok(eddy_viscosity(space, current, params)?.max())
}

/// Scalar integrals evaluated directly from the velocity field.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldIntegrals {
    /// `||Dv||^2` over the domain.
    pub strain: f64,
    /// `||v_tau||^2` over both walls.
    pub wall: f64,
    /// `||v||^2`.
    pub l2: f64,
    /// `||grad v||^2`.
    pub gradient: f64,
}

impl FieldIntegrals {
    pub fn h1_norm(&self) -> f64 {
        (self.l2 + self.gradient).sqrt()
    }
}

pub fn field_integrals(space: &MixedSpace, velocity: &[f64]) -> FieldIntegrals {
    let rule = space.volume_rule();
    let mut out = FieldIntegrals::default();
    let _ = for_each_element(
        space.mesh().n_elements(),
        |e| {
            let quad = ElementQuadrature::new(space, e, rule);
            let local = local_velocity(space, e, velocity);
            let mut acc = [0.0; 3];
            for (sh, &w) in quad.shapes.iter().zip(&quad.weights) {
                let (v, g) = velocity_and_gradient(sh, &local);
                let s = sym_grad_norm(&g);
                acc[0] += w * s * s;
                acc[1] += w * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                acc[2] += w * g.iter().flatten().map(|x| x * x).sum::<f64>();
            }
            Ok(acc)
        },
        |_, acc| {
            out.strain += acc[0];
            out.l2 += acc[1];
            out.gradient += acc[2];
        },
    );
    let srule = space.surface_rule();
    for face in space.mesh().wall_faces() {
        let g = space.geometry(face.element);
        let local = local_velocity(space, face.element, velocity);
        for (mu, w) in srule.points.iter().zip(&srule.weights) {
            let sh = g.shape(space.velocity_order(), &space.face_point(face, mu));
            let (v, _) = velocity_and_gradient(&sh, &local);
            out.wall += w * face.area * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    out
}

/// Energy norm `(a(v, v) + G(v, v))^{1/2} = (2 nu ||Dv||^2 + (nu / d) ||v_tau||^2_walls)^{1/2}`.
pub fn compute_energy_norm(space: &MixedSpace, velocity: &[f64], nu: f64, d: f64) -> f64 {
    let i = field_integrals(space, velocity);
    (2.0 * nu * i.strain + nu / d * i.wall).sqrt()
}

/// `c(v; v)` evaluated from the field with its own eddy viscosity.
pub fn eddy_dissipation(space: &MixedSpace, velocity: &[f64], params: &ModelParams) -> Result<f64> {
    let nut = eddy_viscosity(space, velocity, params)?;
    let rule = space.volume_rule();
    let mut total = 0.0;
    for_each_element(
        space.mesh().n_elements(),
        |e| {
            let region = space.mesh().regions()[e];
            let quad = ElementQuadrature::new(space, e, rule);
            let local = local_velocity(space, e, velocity);
            let mut acc = 0.0;
            for (q, (sh, &w)) in quad.shapes.iter().zip(&quad.weights).enumerate() {
                let t = nut.at(e, q);
                if t == 0.0 {
                    continue;
                }
                let (_, g) = velocity_and_gradient(sh, &local);
                let density = match (nut.variant, region) {
                    (CVariant::NormalOnly, Region::WallLayer) => (0..3).map(|c| g[c][2] * g[c][2]).sum(),
                    _ => {
                        let s = sym_grad_norm(&g);
                        s * s
                    }
                };
                acc += w * t * density;
            }
            Ok(acc)
        },
        |_, acc| total += acc,
    )?;
    Ok(total)
}

/// `<f, v>` by the assembly quadrature.
pub fn work(space: &MixedSpace, velocity: &[f64], force: &BodyForce) -> f64 {
    if force.is_zero() {
        return 0.0;
    }
    let rule = space.volume_rule();
    let mut total = 0.0;
    let _ = for_each_element(
        space.mesh().n_elements(),
        |e| {
            let quad = ElementQuadrature::new(space, e, rule);
            let local = local_velocity(space, e, velocity);
            let mut acc = 0.0;
            for ((sh, &w), &x) in quad.shapes.iter().zip(&quad.weights).zip(&quad.points) {
                let (v, _) = velocity_and_gradient(sh, &local);
                let f = force.eval(x);
                acc += w * (f[0] * v[0] + f[1] * v[1] + f[2] * v[2]);
            }
            Ok(acc)
        },
        |_, acc| total += acc,
    );
    total
}

/// `||f||_{L^2}` by the assembly quadrature.
pub fn force_l2_norm(space: &MixedSpace, force: &BodyForce) -> f64 {
    let rule = space.volume_rule();
    let mut total = 0.0;
    for e in 0..space.mesh().n_elements() {
        let g = space.geometry(e);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let f = force.eval(g.point(l));
            total += w * g.volume * (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
        }
    }
    total.sqrt()
}
