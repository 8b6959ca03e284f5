//! Mixed velocity/pressure finite element spaces on a [`ChannelMesh`].
//!
//! Velocity nodes are identified on the doubled vertex lattice: a vertex
//! `(i, j, k)` sits at `(2i, 2j, 2k)` and the midpoint of an edge at the sum
//! of its endpoints' lattice indices. Wrapping the first two indices modulo
//! `2 n1` and `2 n2` realizes the periodic identification, even on meshes
//! with only two cells per direction.

use std::sync::Arc;

use crate::mesh::{ChannelMesh, WallFace};
use crate::quadrature::{TetRule, TriangleRule};
use crate::sparse::Pattern;

/// Local edge numbering of the quadratic element: node `4 + e` sits on `EDGES[e]`.
pub const EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityOrder {
    Quadratic,
    Linear,
}

impl VelocityOrder {
    pub fn nodes_per_element(self) -> usize {
        match self {
            VelocityOrder::Quadratic => 10,
            VelocityOrder::Linear => 4,
        }
    }
}

/// Shape functions of one element evaluated at one point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeValues {
    pub n: usize,
    pub values: [f64; 10],
    pub gradients: [[f64; 3]; 10],
}

/// Affine element data: volume and constant barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub volume: f64,
    pub grad_lambda: [[f64; 3]; 4],
    pub vertices: [[f64; 3]; 4],
}

impl ElementGeometry {
    pub fn new(mesh: &ChannelMesh, e: usize) -> Self {
        let t = mesh.tetrahedra()[e];
        let v = t.map(|i| mesh.vertices()[i]);
        let j = [
            crate::mesh::sub(v[1], v[0]),
            crate::mesh::sub(v[2], v[0]),
            crate::mesh::sub(v[3], v[0]),
        ];
        // rows of J^{-1}: gradients of lambda_1..3
        let det = crate::mesh::dot(j[0], crate::mesh::cross(j[1], j[2]));
        let g1 = scale(crate::mesh::cross(j[1], j[2]), 1.0 / det);
        let g2 = scale(crate::mesh::cross(j[2], j[0]), 1.0 / det);
        let g3 = scale(crate::mesh::cross(j[0], j[1]), 1.0 / det);
        let g0 = [-g1[0] - g2[0] - g3[0], -g1[1] - g2[1] - g3[1], -g1[2] - g2[2] - g3[2]];
        Self {
            volume: det / 6.0,
            grad_lambda: [g0, g1, g2, g3],
            vertices: v,
        }
    }

    pub fn point(&self, lambda: &[f64; 4]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..4 {
            for c in 0..3 {
                x[c] += lambda[a] * self.vertices[a][c];
            }
        }
        x
    }

    pub fn shape(&self, order: VelocityOrder, lambda: &[f64; 4]) -> ShapeValues {
        let g = &self.grad_lambda;
        let mut s = ShapeValues {
            n: order.nodes_per_element(),
            values: [0.0; 10],
            gradients: [[0.0; 3]; 10],
        };
        match order {
            VelocityOrder::Linear => {
                for a in 0..4 {
                    s.values[a] = lambda[a];
                    s.gradients[a] = g[a];
                }
            }
            VelocityOrder::Quadratic => {
                for a in 0..4 {
                    s.values[a] = lambda[a] * (2.0 * lambda[a] - 1.0);
                    s.gradients[a] = scale(g[a], 4.0 * lambda[a] - 1.0);
                }
                for (k, [a, b]) in EDGES.iter().copied().enumerate() {
                    s.values[4 + k] = 4.0 * lambda[a] * lambda[b];
                    for c in 0..3 {
                        s.gradients[4 + k][c] = 4.0 * (lambda[a] * g[b][c] + lambda[b] * g[a][c]);
                    }
                }
            }
        }
        s
    }

    /// Linear (pressure) shape functions.
    pub fn linear(&self, lambda: &[f64; 4]) -> ShapeValues {
        self.shape(VelocityOrder::Linear, lambda)
    }
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Inf-sup stable velocity/pressure pair with periodic identification,
/// impermeable walls and zero-mean pressure.
#[derive(Debug)]
pub struct MixedSpace {
    mesh: Arc<ChannelMesh>,
    order: VelocityOrder,
    node_coords: Vec<[f64; 3]>,
    node_on_wall: Vec<bool>,
    element_nodes: Vec<[usize; 10]>,
    velocity_dofs: Vec<[Option<usize>; 3]>,
    n_velocity: usize,
    element_pressure: Vec<[usize; 4]>,
    pressure_coords: Vec<[f64; 3]>,
    pressure_mean_weights: Vec<f64>,
    volume_rule: TetRule,
    surface_rule: TriangleRule,
}

impl MixedSpace {
    /// Continuous quadratic velocity / continuous linear pressure.
    pub fn taylor_hood(mesh: Arc<ChannelMesh>) -> Self {
        Self::build(mesh, VelocityOrder::Quadratic)
    }

    /// Linear/linear pair, which violates the discrete inf-sup condition.
    #[doc(hidden)]
    pub fn equal_order_unstable(mesh: Arc<ChannelMesh>) -> Self {
        Self::build(mesh, VelocityOrder::Linear)
    }

    fn build(mesh: Arc<ChannelMesh>, order: VelocityOrder) -> Self {
        let [n1, n2, n3] = mesh.subdivisions();
        let (m1, m2, m3) = (2 * n1, 2 * n2, 2 * n3 + 1);
        let l = mesh.box_length();
        let z = mesh.z_planes();

        // Velocity nodes on the doubled lattice (every lattice point is used
        // by the quadratic element on the Kuhn split; the linear element uses
        // the even points only).
        let mut lattice_to_node = vec![usize::MAX; m1 * m2 * m3];
        let mut node_coords = Vec::new();
        let mut node_on_wall = Vec::new();
        let mut node_of = |key: [usize; 3]| -> usize {
            let (i, j, k) = (key[0] % m1, key[1] % m2, key[2]);
            let slot = (k * m2 + j) * m1 + i;
            if lattice_to_node[slot] == usize::MAX {
                lattice_to_node[slot] = node_coords.len();
                let zc = if k % 2 == 0 { z[k / 2] } else { 0.5 * (z[k / 2] + z[k / 2 + 1]) };
                node_coords.push([i as f64 * l / m1 as f64, j as f64 * l / m2 as f64, zc]);
                node_on_wall.push(k == 0 || k == 2 * n3);
            }
            lattice_to_node[slot]
        };

        let nodes_per = order.nodes_per_element();
        let mut element_nodes = Vec::with_capacity(mesh.n_elements());
        for t in mesh.tetrahedra() {
            let lat = t.map(|v| mesh.lattice()[v]);
            let mut nodes = [usize::MAX; 10];
            for a in 0..4 {
                nodes[a] = node_of([2 * lat[a][0], 2 * lat[a][1], 2 * lat[a][2]]);
            }
            if nodes_per == 10 {
                for (k, [a, b]) in EDGES.iter().copied().enumerate() {
                    nodes[4 + k] = node_of([
                        lat[a][0] + lat[b][0],
                        lat[a][1] + lat[b][1],
                        lat[a][2] + lat[b][2],
                    ]);
                }
            }
            element_nodes.push(nodes);
        }

        let mut velocity_dofs = Vec::with_capacity(node_coords.len());
        let mut n_velocity = 0;
        for &wall in &node_on_wall {
            let mut d = [None; 3];
            for (c, slot) in d.iter_mut().enumerate() {
                if !(wall && c == 2) {
                    *slot = Some(n_velocity);
                    n_velocity += 1;
                }
            }
            velocity_dofs.push(d);
        }

        // Pressure nodes: vertices modulo periodicity.
        let mut master_to_p = vec![usize::MAX; mesh.vertices().len()];
        let mut pressure_coords = Vec::new();
        let element_pressure: Vec<[usize; 4]> = mesh
            .tetrahedra()
            .iter()
            .map(|t| {
                t.map(|v| {
                    let m = mesh.periodic_master(v);
                    if master_to_p[m] == usize::MAX {
                        master_to_p[m] = pressure_coords.len();
                        pressure_coords.push(mesh.vertices()[m]);
                    }
                    master_to_p[m]
                })
            })
            .collect();

        let mut pressure_mean_weights = vec![0.0; pressure_coords.len()];
        for (e, p) in element_pressure.iter().enumerate() {
            for &q in p {
                pressure_mean_weights[q] += 0.25 * mesh.volumes()[e];
            }
        }
        debug_assert!(pressure_coords.len() == n1 * n2 * (n3 + 1));

        Self {
            mesh,
            order,
            node_coords,
            node_on_wall,
            element_nodes,
            velocity_dofs,
            n_velocity,
            element_pressure,
            pressure_coords,
            pressure_mean_weights,
            volume_rule: TetRule::degree5(),
            surface_rule: TriangleRule::degree4(),
        }
    }

    pub fn mesh(&self) -> &Arc<ChannelMesh> {
        &self.mesh
    }

    pub fn velocity_order(&self) -> VelocityOrder {
        self.order
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn node_coords(&self) -> &[[f64; 3]] {
        &self.node_coords
    }

    pub fn node_on_wall(&self) -> &[bool] {
        &self.node_on_wall
    }

    /// Velocity degree-of-freedom index of component `c` at `node`; `None` where eliminated.
    pub fn velocity_dof(&self, node: usize, c: usize) -> Option<usize> {
        self.velocity_dofs[node][c]
    }

    pub fn n_velocity(&self) -> usize {
        self.n_velocity
    }

    pub fn n_pressure(&self) -> usize {
        self.pressure_coords.len()
    }

    pub fn pressure_coords(&self) -> &[[f64; 3]] {
        &self.pressure_coords
    }

    /// `int_Omega psi_j` for every pressure basis function.
    pub fn pressure_mean_weights(&self) -> &[f64] {
        &self.pressure_mean_weights
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        &self.element_nodes[e][..self.order.nodes_per_element()]
    }

    pub fn element_pressure(&self, e: usize) -> &[usize; 4] {
        &self.element_pressure[e]
    }

    /// Velocity dofs of element `e`, laid out as `3 * local_node + component`.
    pub fn element_velocity_dofs(&self, e: usize) -> ([Option<usize>; 30], usize) {
        let nodes = self.element_nodes(e);
        let mut out = [None; 30];
        for (a, &n) in nodes.iter().enumerate() {
            for c in 0..3 {
                out[3 * a + c] = self.velocity_dofs[n][c];
            }
        }
        (out, 3 * nodes.len())
    }

    pub fn volume_rule(&self) -> &TetRule {
        &self.volume_rule
    }

    pub fn surface_rule(&self) -> &TriangleRule {
        &self.surface_rule
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry {
        ElementGeometry::new(&self.mesh, e)
    }

    /// Element barycentric coordinates of a surface quadrature point on `face`.
    pub fn face_point(&self, face: &WallFace, mu: &[f64; 3]) -> [f64; 4] {
        let mut lambda = [0.0; 4];
        for (k, &l) in face.local_vertices.iter().enumerate() {
            lambda[l] = mu[k];
        }
        lambda
    }

    /// Velocity-velocity sparsity pattern.
    pub fn velocity_pattern(&self) -> Pattern {
        let mut cols = vec![Vec::new(); self.n_velocity];
        for e in 0..self.mesh.n_elements() {
            let (dofs, n) = self.element_velocity_dofs(e);
            let dofs: Vec<usize> = dofs[..n].iter().flatten().copied().collect();
            for &c in &dofs {
                cols[c].extend_from_slice(&dofs);
            }
        }
        Pattern::from_columns(self.n_velocity, cols)
    }

    /// Pressure-pressure sparsity pattern.
    pub fn pressure_pattern(&self) -> Pattern {
        let mut cols = vec![Vec::new(); self.n_pressure()];
        for p in &self.element_pressure {
            for &c in p {
                cols[c].extend_from_slice(p);
            }
        }
        Pattern::from_columns(self.n_pressure(), cols)
    }

    /// Pressure-by-velocity pattern of the divergence coupling.
    pub fn divergence_pattern(&self) -> Pattern {
        let mut cols = vec![Vec::new(); self.n_velocity];
        for e in 0..self.mesh.n_elements() {
            let (dofs, n) = self.element_velocity_dofs(e);
            let p = &self.element_pressure[e];
            for &c in dofs[..n].iter().flatten() {
                cols[c].extend_from_slice(p);
            }
        }
        Pattern::from_columns(self.n_pressure(), cols)
    }

    /// Pattern of the bordered saddle-point matrix
    /// `[[K, -D^T, 0], [-D, 0, m], [0, m^T, 0]]` with unknowns `(v, p, lambda)`.
    pub fn saddle_pattern(&self) -> Pattern {
        let nv = self.n_velocity;
        let np = self.n_pressure();
        let n = nv + np + 1;
        let mut cols = vec![Vec::new(); n];
        for e in 0..self.mesh.n_elements() {
            let (dofs, k) = self.element_velocity_dofs(e);
            let vdofs: Vec<usize> = dofs[..k].iter().flatten().copied().collect();
            let pdofs: Vec<usize> = self.element_pressure[e].iter().map(|&q| nv + q).collect();
            for &c in &vdofs {
                cols[c].extend_from_slice(&vdofs);
                cols[c].extend_from_slice(&pdofs);
            }
            for &c in &pdofs {
                cols[c].extend_from_slice(&vdofs);
            }
        }
        for q in 0..np {
            cols[nv + q].push(n - 1);
            cols[n - 1].push(nv + q);
        }
        Pattern::from_columns(n, cols)
    }

    /// Interpolates a velocity field at the velocity nodes. Normal components at
    /// wall nodes are dropped (the field should vanish there).
    pub fn interpolate_velocity(&self, field: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity];
        for (n, &x) in self.node_coords.iter().enumerate() {
            let v = field(x);
            for c in 0..3 {
                if let Some(d) = self.velocity_dofs[n][c] {
                    out[d] = v[c];
                }
            }
        }
        out
    }

    pub fn interpolate_pressure(&self, field: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        self.pressure_coords.iter().map(|&x| field(x)).collect()
    }
}
