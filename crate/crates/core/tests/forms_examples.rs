use std::sync::Arc;

use channel_les::forms::{
    assemble_a, assemble_b, assemble_c, assemble_convection, assemble_divergence, assemble_g, assemble_rhs,
    eddy_viscosity_wall, sup_norm_nut, ConvectionForm,
};
use channel_les::sparse::{dot, CscMatrix};
use channel_les::*;
use proptest::prelude::*;

const L: f64 = 1.5;

fn aligned(n: usize) -> Arc<MixedSpace> {
    let mesh = ChannelMesh::build(&ChannelGeometry::aligned(L, n, 0.2, 0.01)).unwrap();
    Arc::new(MixedSpace::taylor_hood(Arc::new(mesh)))
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn viscous_form_of_linear_shear() {
    // v = (x3, 0, 0): |Dv|^2 = 1/2, so 2 nu ||Dv||^2 = nu L^2.
    let space = aligned(4);
    let nu = 0.3;
    let v = space.interpolate_velocity(|x| [x[2], 0.0, 0.0]);
    let a = assemble_a(&space, nu);
    assert!(close(a.form(&v, &v), nu * L * L, 1e-12));
}

#[test]
fn wall_friction_of_uniform_slip() {
    let space = aligned(4);
    let (nu, d) = (0.3, 0.01);
    let v = space.interpolate_velocity(|_| [1.0, 0.0, 0.0]);
    let g = assemble_g(&space, nu, d);
    assert!(close(g.form(&v, &v), nu / d * 2.0 * L * L, 1e-12));
}

#[test]
fn divergence_pairing() {
    // div (0, 0, x3 - x3^2) = 1 - 2 x3, and the integral of (1 - 2 x3)^2 is 1/3.
    let space = aligned(4);
    let v = space.interpolate_velocity(|x| [0.0, 0.0, x[2] - x[2] * x[2]]);
    let q = space.interpolate_pressure(|x| 1.0 - 2.0 * x[2]);
    let d = assemble_divergence(&space);
    assert!(close(dot(&q, &d.mul_vec(&v)), L * L / 3.0, 1e-12));
}

#[test]
fn load_vector_pairings() {
    let space = aligned(4);
    let force = BodyForce::Constant([1.0, 2.0, 3.0]);
    let rhs = assemble_rhs(&space, &force);
    let slip = space.interpolate_velocity(|_| [1.0, 0.0, 0.0]);
    let bulge = space.interpolate_velocity(|x| [0.0, 0.0, x[2] - x[2] * x[2]]);
    assert!(close(dot(&rhs, &slip), L * L, 1e-12));
    assert!(close(dot(&rhs, &bulge), 3.0 * L * L / 6.0, 1e-12));
}

#[test]
fn eddy_form_on_uniform_mesh() {
    // Uniform n = 4 cells with D/2 - d = 1/4 so the interface is a mesh plane.
    let (n, d, big_d, cs) = (4, 0.01, 0.52, 0.2);
    let g = ChannelGeometry::uniform(L, n, big_d, d);
    let mesh = Arc::new(ChannelMesh::build(&g).unwrap());
    assert!(mesh.interface_aligned());
    let space = MixedSpace::taylor_hood(mesh);
    let params = ModelParams::new(0.1, d, big_d).with_constants(cs, 0.0);
    let v = space.interpolate_velocity(|x| [x[2], 0.0, 0.0]);

    // Every Kuhn tetrahedron of a cell with sides (L/n, L/n, 1/n) has the
    // cell diagonal as diameter; |Dv| = 1/sqrt(2) everywhere.
    let (hx, hz) = (L / n as f64, 1.0 / n as f64);
    let h = (2.0 * hx * hx + hz * hz).sqrt();
    let interior_volume = L * L * (1.0 - 2.0 * (big_d / 2.0 - d));
    let expected = cs * cs * h * h * 0.5f64.powf(1.5) * interior_volume;

    let c = assemble_c(&space, &v, &params).unwrap();
    assert!(close(c.form(&v, &v), expected, 1e-12));
    let sup = sup_norm_nut(&space, &v, &params).unwrap();
    assert!(close(sup, cs * cs * h * h * 0.5f64.sqrt(), 1e-12));
}

struct Stub(f64);

impl FrictionLaw for Stub {
    fn friction_velocity(&self, _speed: f64, _wall_distance: f64) -> channel_les::Result<f64> {
        Ok(self.0)
    }
}

struct Unreachable;

impl FrictionLaw for Unreachable {
    fn friction_velocity(&self, _: f64, _: f64) -> channel_les::Result<f64> {
        panic!("the friction law must not be evaluated")
    }
}

#[test]
fn wall_eddy_viscosity_uses_the_friction_law() {
    let nut = eddy_viscosity_wall(2.0, 0.05, 0.25, 0.1, &Stub(0.7)).unwrap();
    assert!(close(nut, 0.1 * 0.25 * 0.7, 1e-15));
    assert_eq!(eddy_viscosity_wall(2.0, 0.05, 0.25, 0.0, &Unreachable).unwrap(), 0.0);
    assert_eq!(eddy_viscosity_wall(0.0, 0.05, 0.25, 0.1, &Unreachable).unwrap(), 0.0);
}

fn cancellation_scale(m: &CscMatrix, v: &[f64]) -> f64 {
    m.triplets().map(|(i, j, x)| (x * v[i] * v[j]).abs()).sum()
}

#[test]
fn advective_form_is_not_energy_neutral() {
    let space = aligned(4);
    let n = space.n_velocity();
    let z: Vec<f64> = (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let v: Vec<f64> = (0..n).map(|i| ((i * 53 % 97) as f64 / 48.0) - 1.0).collect();
    let b = assemble_convection(&space, &z, ConvectionForm::Advective);
    assert!(b.form(&v, &v).abs() > 1e-6 * cancellation_scale(&b, &v));
    let skew = assemble_convection(&space, &z, ConvectionForm::Skew);
    assert!(skew.form(&v, &v).abs() <= 1e-12 * cancellation_scale(&skew, &v));
}

fn vectors(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        proptest::collection::vec(-1.0f64..1.0, n),
        proptest::collection::vec(-1.0f64..1.0, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn convection_is_skew_symmetric((z, v) in vectors(aligned(4).n_velocity())) {
        let space = aligned(4);
        let b = assemble_b(&space, &z);
        prop_assert!(b.form(&v, &v).abs() <= 1e-12 * cancellation_scale(&b, &v));
        let scale = b.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (i, j, x) in b.triplets() {
            prop_assert!((x + b.get(j, i)).abs() <= 1e-14 * scale);
        }
    }

    #[test]
    fn viscous_and_friction_forms_are_symmetric_positive((z, v) in vectors(aligned(4).n_velocity())) {
        let space = aligned(4);
        let a = assemble_a(&space, 0.1);
        let g = assemble_g(&space, 0.1, 0.01);
        prop_assert_eq!(a.asymmetry(), 0.0);
        prop_assert_eq!(g.asymmetry(), 0.0);
        prop_assert!(a.form(&v, &v) >= 0.0);
        prop_assert!(g.form(&z, &z) >= 0.0);
        let params = ModelParams::new(0.1, 0.01, 0.2);
        let c = assemble_c(&space, &z, &params).unwrap();
        prop_assert!(c.form(&v, &v) >= -1e-14 * cancellation_scale(&c, &v));
    }
}
