use std::sync::Arc;

use crate::space::{MixedSpace, ShapeValues};

/// Velocity and pressure coefficient vectors on a [`MixedSpace`].
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    space: Arc<MixedSpace>,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl DiscreteSolution {
    pub fn new(space: Arc<MixedSpace>, velocity: Vec<f64>, pressure: Vec<f64>) -> Self {
        assert_eq!(velocity.len(), space.n_velocity());
        assert_eq!(pressure.len(), space.n_pressure());
        Self {
            space,
            velocity,
            pressure,
        }
    }

    pub fn zero(space: Arc<MixedSpace>) -> Self {
        let (nv, np) = (space.n_velocity(), space.n_pressure());
        Self::new(space, vec![0.0; nv], vec![0.0; np])
    }

    /// Nodal interpolant of closed-form fields.
    pub fn interpolate(
        space: Arc<MixedSpace>,
        velocity: impl Fn([f64; 3]) -> [f64; 3],
        pressure: impl Fn([f64; 3]) -> f64,
    ) -> Self {
        let v = space.interpolate_velocity(velocity);
        let p = space.interpolate_pressure(pressure);
        Self::new(space, v, p)
    }

    pub fn space(&self) -> &Arc<MixedSpace> {
        &self.space
    }

    /// Velocity vector at every velocity node (eliminated components are zero).
    pub fn node_velocity(&self, node: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (c, vc) in v.iter_mut().enumerate() {
            if let Some(d) = self.space.velocity_dof(node, c) {
                *vc = self.velocity[d];
            }
        }
        v
    }

    /// Mean of the pressure over the domain.
    pub fn pressure_mean(&self) -> f64 {
        let w = self.space.pressure_mean_weights();
        let total: f64 = w.iter().sum();
        self.pressure.iter().zip(w).map(|(p, w)| p * w).sum::<f64>() / total
    }

    /// Value and gradient (`grad[i][j] = d_j v_i`) of the velocity and the
    /// pressure at the point with barycentric coordinates `lambda` in element `e`.
    pub fn eval_in_element(&self, e: usize, lambda: &[f64; 4]) -> PointValues {
        let g = self.space.geometry(e);
        let sh = g.shape(self.space.velocity_order(), lambda);
        let local = local_velocity(&self.space, e, &self.velocity);
        let (velocity, gradient) = velocity_and_gradient(&sh, &local);
        let lin = g.linear(lambda);
        let pressure = self
            .space
            .element_pressure(e)
            .iter()
            .enumerate()
            .map(|(a, &q)| lin.values[a] * self.pressure[q])
            .sum();
        PointValues {
            velocity,
            gradient,
            pressure,
        }
    }

    /// Evaluates the solution at a physical point (wrapped periodically).
    pub fn eval(&self, x: [f64; 3]) -> Option<PointValues> {
        let (e, lambda) = self.space.mesh().locate(x)?;
        Some(self.eval_in_element(e, &lambda))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub velocity: [f64; 3],
    pub gradient: [[f64; 3]; 3],
    pub pressure: f64,
}

/// Element-local velocity coefficients laid out as `3 * local_node + component`.
pub(crate) fn local_velocity(space: &MixedSpace, e: usize, coeffs: &[f64]) -> [f64; 30] {
    let (dofs, n) = space.element_velocity_dofs(e);
    let mut out = [0.0; 30];
    for k in 0..n {
        if let Some(d) = dofs[k] {
            out[k] = coeffs[d];
        }
    }
    out
}

pub(crate) fn velocity_and_gradient(sh: &ShapeValues, local: &[f64; 30]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [0.0; 3];
    let mut g = [[0.0; 3]; 3];
    for a in 0..sh.n {
        for c in 0..3 {
            let coef = local[3 * a + c];
            if coef == 0.0 {
                continue;
            }
            v[c] += sh.values[a] * coef;
            for j in 0..3 {
                g[c][j] += sh.gradients[a][j] * coef;
            }
        }
    }
    (v, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ChannelGeometry, ChannelMesh};

    #[test]
    fn quadratic_fields_are_reproduced_and_continuous() {
        let mesh = ChannelMesh::build(&ChannelGeometry::aligned(1.0, 4, 0.2, 0.01)).unwrap();
        let space = Arc::new(MixedSpace::taylor_hood(Arc::new(mesh)));
        let field = |x: [f64; 3]| [x[2] * (1.0 - x[2]) + 0.3, 2.0 * x[2] * x[2], x[2] - x[2] * x[2]];
        let sol = DiscreteSolution::interpolate(space.clone(), field, |x| x[2] - 0.5);
        for p in [[0.3, 0.4, 0.37], [0.9, 0.12, 0.05], [0.51, 0.77, 0.93]] {
            let v = sol.eval(p).unwrap();
            let exact = field(p);
            for c in 0..3 {
                assert!((v.velocity[c] - exact[c]).abs() < 1e-13);
            }
            assert!((v.gradient[0][2] - (1.0 - 2.0 * p[2])).abs() < 1e-12);
            assert!((v.pressure - (p[2] - 0.5)).abs() < 1e-13);
        }
        // A point on an interior face evaluates identically from both sides.
        let m = space.mesh();
        let (e, lam) = m.locate([0.3, 0.4, 0.37]).unwrap();
        let t = m.tetrahedra()[e];
        let face_point = {
            let mut x = [0.0; 3];
            for a in 0..3 {
                for c in 0..3 {
                    x[c] += m.vertices()[t[a]][c] / 3.0;
                }
            }
            x
        };
        let _ = lam;
        let from_e = sol.eval_in_element(e, &m.barycentric(e, face_point));
        let other = (0..m.n_elements())
            .find(|&k| {
                k != e && {
                    let l = m.barycentric(k, face_point);
                    l.iter().all(|&v| v > -1e-12)
                }
            })
            .unwrap();
        let from_other = sol.eval_in_element(other, &m.barycentric(other, face_point));
        for c in 0..3 {
            assert!((from_e.velocity[c] - from_other.velocity[c]).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_mean_of_interpolated_linear_field() {
        let mesh = ChannelMesh::build(&ChannelGeometry::uniform(1.0, 2, 0.5, 0.01)).unwrap();
        let space = Arc::new(MixedSpace::taylor_hood(Arc::new(mesh)));
        let sol = DiscreteSolution::interpolate(space, |_| [0.0; 3], |x| 1.0 - 2.0 * x[2]);
        assert!(sol.pressure_mean().abs() < 1e-14);
    }
}
