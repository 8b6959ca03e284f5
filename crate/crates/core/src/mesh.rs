//! Structured, periodic tetrahedral meshes of the computational channel
//! `[0, L]^2 x [0, 1]`, periodic in `x1` and `x2`, with flat walls at
//! `x3 = 0` and `x3 = 1`.
//!
//! Every box of the tensor lattice is cut into the six Kuhn tetrahedra that
//! share its main diagonal. The split is translation invariant, so the traces
//! on opposite periodic faces coincide and refinement produces a regular
//! family with one aspect-ratio constant.

use std::io::Write;

use crate::error::{Error, Result};

/// Distribution of the `x3` mesh planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    /// `n3` equal layers.
    Uniform,
    /// Piecewise uniform: a `wall_fraction` share of the `n3` layers fills each
    /// wall strip `[0, D/2 - d]` and `[1 - (D/2 - d), 1]`, the rest fills the core.
    /// Puts a mesh plane exactly on both layer interfaces.
    LayerAligned { wall_fraction: f64 },
}

/// Element label for the eddy-viscosity model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    WallLayer,
}

impl Region {
    pub fn code(self) -> u8 {
        match self {
            Region::Interior => 0,
            Region::WallLayer => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Bottom,
    Top,
}

/// Triangle of the tetrahedral mesh lying on `x3 = 0` or `x3 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFace {
    pub element: usize,
    /// Local vertex numbers (0..4) of `element` spanning the face.
    pub local_vertices: [usize; 3],
    pub vertices: [usize; 3],
    pub wall: Wall,
    pub area: f64,
}

/// Lattice direction of a periodic identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicDirection {
    X1,
    X2,
}

/// `image` is the copy of `source` translated by `L` along `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicPair {
    pub source: usize,
    pub image: usize,
    pub direction: PeriodicDirection,
}

/// Geometric input of [`ChannelMesh::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGeometry {
    /// Period `L` in `x1` and `x2`.
    pub box_length: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub grading: Grading,
    /// Boundary-layer thickness `D`.
    pub layer_thickness: f64,
    /// Linear sub-layer thickness `d` (distance from the computational to the physical wall).
    pub sublayer: f64,
}

impl ChannelGeometry {
    pub fn uniform(box_length: f64, n: usize, layer_thickness: f64, sublayer: f64) -> Self {
        Self {
            box_length,
            n1: n,
            n2: n,
            n3: n,
            grading: Grading::Uniform,
            layer_thickness,
            sublayer,
        }
    }

    pub fn aligned(box_length: f64, n: usize, layer_thickness: f64, sublayer: f64) -> Self {
        Self {
            grading: Grading::LayerAligned { wall_fraction: 0.25 },
            ..Self::uniform(box_length, n, layer_thickness, sublayer)
        }
    }

    /// Height `D/2 - d` of each wall-layer strip inside the computational domain.
    pub fn wall_layer_height(&self) -> f64 {
        0.5 * self.layer_thickness - self.sublayer
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMesh(m));
        if !(self.box_length > 0.0 && self.box_length.is_finite()) {
            return bad(format!("box length must be positive, got {}", self.box_length));
        }
        if self.n1 < 2 || self.n2 < 2 || self.n3 < 2 {
            return bad(format!(
                "subdivisions must be at least 2, got ({}, {}, {})",
                self.n1, self.n2, self.n3
            ));
        }
        if !(self.sublayer > 0.0) {
            return bad(format!("sub-layer thickness d must be positive, got {}", self.sublayer));
        }
        let delta = self.wall_layer_height();
        if !(delta > 0.0 && delta < 0.5) {
            return bad(format!(
                "need 2d < D < 1 + 2d so that 0 < D/2 - d < 1/2, got D = {}, d = {}",
                self.layer_thickness, self.sublayer
            ));
        }
        Ok(())
    }

    /// The `n3 + 1` ordinates of the horizontal mesh planes.
    pub fn z_planes(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n3 = self.n3;
        match self.grading {
            Grading::Uniform => Ok((0..=n3).map(|k| k as f64 / n3 as f64).collect()),
            Grading::LayerAligned { wall_fraction } => {
                let m = wall_fraction * n3 as f64;
                let wall_cells = m.round();
                if !(wall_fraction > 0.0) || (m - wall_cells).abs() > 1e-9 || wall_cells < 1.0 {
                    return Err(Error::InvalidMesh(format!(
                        "wall_fraction {wall_fraction} times n3 = {n3} is not a positive integer; \
                         no mesh plane can sit on the layer interface"
                    )));
                }
                let m = wall_cells as usize;
                if 2 * m >= n3 {
                    return Err(Error::InvalidMesh(format!(
                        "wall layers take {} of {n3} layers, leaving no core layer",
                        2 * m
                    )));
                }
                let delta = self.wall_layer_height();
                let core = n3 - 2 * m;
                let z = (0..=n3)
                    .map(|k| {
                        if k <= m {
                            delta * k as f64 / m as f64
                        } else if k <= m + core {
                            delta + (1.0 - 2.0 * delta) * (k - m) as f64 / core as f64
                        } else {
                            1.0 - delta * (n3 - k) as f64 / m as f64
                        }
                    })
                    .collect();
                Ok(z)
            }
        }
    }
}

/// The six Kuhn simplices of the unit cube: the path `0 -> e_p0 -> e_p0 + e_p1 -> (1,1,1)`.
const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Local faces of a tetrahedron, opposite to vertex 3, 2, 1, 0.
pub const TET_FACES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];

/// Periodic tetrahedral mesh of the channel.
#[derive(Debug, Clone)]
pub struct ChannelMesh {
    geometry: ChannelGeometry,
    z_planes: Vec<f64>,
    vertices: Vec<[f64; 3]>,
    lattice: Vec<[usize; 3]>,
    tetrahedra: Vec<[usize; 4]>,
    periodic_pairs: Vec<PeriodicPair>,
    wall_faces: Vec<WallFace>,
    diameters: Vec<f64>,
    volumes: Vec<f64>,
    regions: Vec<Region>,
    h: f64,
    aspect_ratio: f64,
    interface_aligned: bool,
}

impl ChannelMesh {
    pub fn build(geometry: &ChannelGeometry) -> Result<Self> {
        let z_planes = geometry.z_planes()?;
        let ChannelGeometry {
            box_length,
            n1,
            n2,
            n3,
            ..
        } = *geometry;
        let dx = box_length / n1 as f64;
        let dy = box_length / n2 as f64;

        let vid = |i: usize, j: usize, k: usize| (k * (n2 + 1) + j) * (n1 + 1) + i;
        let mut vertices = Vec::with_capacity((n1 + 1) * (n2 + 1) * (n3 + 1));
        let mut lattice = Vec::with_capacity(vertices.capacity());
        for k in 0..=n3 {
            for j in 0..=n2 {
                for i in 0..=n1 {
                    // x(n1) == L exactly
                    let x = if i == n1 { box_length } else { i as f64 * dx };
                    let y = if j == n2 { box_length } else { j as f64 * dy };
                    vertices.push([x, y, z_planes[k]]);
                    lattice.push([i, j, k]);
                }
            }
        }

        let mut periodic_pairs = Vec::new();
        for k in 0..=n3 {
            for j in 0..=n2 {
                periodic_pairs.push(PeriodicPair {
                    source: vid(0, j, k),
                    image: vid(n1, j, k),
                    direction: PeriodicDirection::X1,
                });
            }
            for i in 0..=n1 {
                periodic_pairs.push(PeriodicPair {
                    source: vid(i, 0, k),
                    image: vid(i, n2, k),
                    direction: PeriodicDirection::X2,
                });
            }
        }

        let mut tetrahedra = Vec::with_capacity(6 * n1 * n2 * n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    for perm in PERMUTATIONS {
                        let mut corner = [i, j, k];
                        let mut tet = [vid(i, j, k); 4];
                        for (step, &axis) in perm.iter().enumerate() {
                            corner[axis] += 1;
                            tet[step + 1] = vid(corner[0], corner[1], corner[2]);
                        }
                        if signed_volume(&vertices, &tet) < 0.0 {
                            tet.swap(1, 2);
                        }
                        tetrahedra.push(tet);
                    }
                }
            }
        }

        let volumes: Vec<f64> = tetrahedra.iter().map(|t| signed_volume(&vertices, t)).collect();
        let diameters: Vec<f64> = tetrahedra.iter().map(|t| diameter(&vertices, t)).collect();
        let h = diameters.iter().copied().fold(0.0, f64::max);
        let aspect_ratio = tetrahedra
            .iter()
            .zip(&diameters)
            .zip(&volumes)
            .map(|((t, &hk), &vol)| hk / (2.0 * inradius(&vertices, t, vol)))
            .fold(0.0, f64::max);

        let mut wall_faces = Vec::new();
        for (e, tet) in tetrahedra.iter().enumerate() {
            for face in TET_FACES {
                let ks = face.map(|l| lattice[tet[l]][2]);
                let wall = if ks.iter().all(|&k| k == 0) {
                    Some(Wall::Bottom)
                } else if ks.iter().all(|&k| k == n3) {
                    Some(Wall::Top)
                } else {
                    None
                };
                if let Some(wall) = wall {
                    let verts = face.map(|l| tet[l]);
                    wall_faces.push(WallFace {
                        element: e,
                        local_vertices: face,
                        vertices: verts,
                        wall,
                        area: triangle_area(&vertices, &verts),
                    });
                }
            }
        }

        let mut mesh = Self {
            geometry: geometry.clone(),
            z_planes,
            vertices,
            lattice,
            tetrahedra,
            periodic_pairs,
            wall_faces,
            diameters,
            volumes,
            regions: Vec::new(),
            h,
            aspect_ratio,
            interface_aligned: false,
        };
        let delta = geometry.wall_layer_height();
        mesh.regions = (0..mesh.n_elements())
            .map(|e| region_of_centroid(mesh.centroid(e)[2], delta))
            .collect();
        mesh.interface_aligned = find_straddling(&mesh, delta).is_none();
        Ok(mesh)
    }

    pub fn geometry(&self) -> &ChannelGeometry {
        &self.geometry
    }

    pub fn box_length(&self) -> f64 {
        self.geometry.box_length
    }

    pub fn subdivisions(&self) -> [usize; 3] {
        [self.geometry.n1, self.geometry.n2, self.geometry.n3]
    }

    pub fn z_planes(&self) -> &[f64] {
        &self.z_planes
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    /// Lattice indices `(i, j, k)` of every vertex, `i` in `0..=n1` etc.
    pub fn lattice(&self) -> &[[usize; 3]] {
        &self.lattice
    }

    pub fn tetrahedra(&self) -> &[[usize; 4]] {
        &self.tetrahedra
    }

    pub fn n_elements(&self) -> usize {
        self.tetrahedra.len()
    }

    pub fn periodic_pairs(&self) -> &[PeriodicPair] {
        &self.periodic_pairs
    }

    pub fn wall_faces(&self) -> &[WallFace] {
        &self.wall_faces
    }

    /// Element diameters `h_K`.
    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Global mesh size `h = max_K h_K`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `max_K h_K / (2 r_K)` with `r_K` the inradius.
    pub fn aspect_ratio(&self) -> f64 {
        self.aspect_ratio
    }

    /// True when no element crosses a wall-layer interface plane.
    pub fn interface_aligned(&self) -> bool {
        self.interface_aligned
    }

    pub fn centroid(&self, e: usize) -> [f64; 3] {
        let t = &self.tetrahedra[e];
        let mut c = [0.0; 3];
        for &v in t {
            for a in 0..3 {
                c[a] += 0.25 * self.vertices[v][a];
            }
        }
        c
    }

    /// Canonical representative of a vertex under the periodic identification.
    pub fn periodic_master(&self, v: usize) -> usize {
        let [i, j, k] = self.lattice[v];
        let (n1, n2) = (self.geometry.n1, self.geometry.n2);
        (k * (n2 + 1) + j % n2) * (n1 + 1) + i % n1
    }

    /// Distance of `x` to the nearest physical wall (`x3 = -d` or `x3 = 1 + d`).
    pub fn wall_distance(&self, x: [f64; 3]) -> f64 {
        wall_distance(x[2], self.geometry.sublayer)
    }

    /// Element containing `x` (periodically wrapped) and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: [f64; 3]) -> Option<(usize, [f64; 4])> {
        let [n1, n2, n3] = self.subdivisions();
        let l = self.box_length();
        if !(x[2] >= 0.0 && x[2] <= 1.0) {
            return None;
        }
        let wrap = |c: f64| c.rem_euclid(l);
        let (x1, x2) = (wrap(x[0]), wrap(x[1]));
        let cell = |c: f64, n: usize| ((c / l * n as f64).floor() as usize).min(n - 1);
        let i = cell(x1, n1);
        let j = cell(x2, n2);
        let k = match self.z_planes.partition_point(|&z| z <= x[2]) {
            0 => 0,
            p => (p - 1).min(n3 - 1),
        };
        let p = [x1, x2, x[2]];
        let box_index = (k * n2 + j) * n1 + i;
        let mut best = (usize::MAX, [0.0; 4], f64::NEG_INFINITY);
        for local in 0..6 {
            let e = 6 * box_index + local;
            let lam = self.barycentric(e, p);
            let worst = lam.iter().copied().fold(f64::INFINITY, f64::min);
            if worst > best.2 {
                best = (e, lam, worst);
            }
        }
        (best.2 > -1e-10).then_some((best.0, best.1))
    }

    /// Barycentric coordinates of `p` with respect to element `e` (no wrapping).
    pub fn barycentric(&self, e: usize, p: [f64; 3]) -> [f64; 4] {
        let t = self.tetrahedra[e];
        let v = |a: usize| self.vertices[t[a]];
        let vol = self.volumes[e];
        let mut lam = [0.0; 4];
        for a in 0..4 {
            let mut pts = [v(0), v(1), v(2), v(3)];
            pts[a] = p;
            lam[a] = det3(sub(pts[1], pts[0]), sub(pts[2], pts[0]), sub(pts[3], pts[0])) / 6.0 / vol;
        }
        lam
    }

    /// Legacy ASCII VTK unstructured grid of the mesh with cell data `region` and `h_K`.
    pub fn write_vtk<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_vtk_geometry(self, &mut out, "channel mesh")?;
        writeln!(out, "CELL_DATA {}", self.n_elements())?;
        write_cell_scalars(&mut out, "region", "int", self.regions.iter().map(|r| r.code().to_string()))?;
        write_cell_scalars(&mut out, "h_K", "double", self.diameters.iter().map(|h| h.to_string()))?;
        Ok(())
    }
}

pub(crate) fn write_vtk_geometry<W: Write>(mesh: &ChannelMesh, out: &mut W, title: &str) -> std::io::Result<()> {
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.vertices.len())?;
    for p in &mesh.vertices {
        writeln!(out, "{} {} {}", p[0], p[1], p[2])?;
    }
    let n = mesh.n_elements();
    writeln!(out, "CELLS {} {}", n, 5 * n)?;
    for t in &mesh.tetrahedra {
        writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3])?;
    }
    writeln!(out, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(out, "10")?;
    }
    Ok(())
}

pub(crate) fn write_cell_scalars<W: Write>(
    out: &mut W,
    name: &str,
    kind: &str,
    values: impl Iterator<Item = String>,
) -> std::io::Result<()> {
    writeln!(out, "SCALARS {name} {kind} 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Distance to the nearest physical wall, `min(x3, 1 - x3) + d`.
pub fn wall_distance(x3: f64, sublayer: f64) -> f64 {
    x3.min(1.0 - x3).max(0.0) + sublayer
}

fn region_of_centroid(x3: f64, delta: f64) -> Region {
    if x3 <= delta || x3 >= 1.0 - delta {
        Region::WallLayer
    } else {
        Region::Interior
    }
}

fn find_straddling(mesh: &ChannelMesh, delta: f64) -> Option<(usize, f64)> {
    let tol = 1e-12;
    for (e, t) in mesh.tetrahedra.iter().enumerate() {
        let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            let z = mesh.vertices[v][2];
            (lo.min(z), hi.max(z))
        });
        for plane in [delta, 1.0 - delta] {
            if lo < plane - tol && hi > plane + tol {
                return Some((e, plane));
            }
        }
    }
    None
}

/// Region label of every element by the centroid rule against the strips
/// `(0, D/2 - d]` and `[1 - (D/2 - d), 1)`; fails if any element crosses an
/// interface plane.
pub fn classify_regions(mesh: &ChannelMesh, layer_thickness: f64, sublayer: f64) -> Result<Vec<Region>> {
    let delta = 0.5 * layer_thickness - sublayer;
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidMesh(format!(
            "wall-layer height D/2 - d = {delta} outside (0, 1/2)"
        )));
    }
    if let Some((element, plane)) = find_straddling(mesh, delta) {
        return Err(Error::StraddlingElement { element, plane });
    }
    Ok((0..mesh.n_elements())
        .map(|e| region_of_centroid(mesh.centroid(e)[2], delta))
        .collect())
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn det3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    dot(a, cross(b, c))
}

fn signed_volume(vertices: &[[f64; 3]], t: &[usize; 4]) -> f64 {
    let p0 = vertices[t[0]];
    det3(
        sub(vertices[t[1]], p0),
        sub(vertices[t[2]], p0),
        sub(vertices[t[3]], p0),
    ) / 6.0
}

fn diameter(vertices: &[[f64; 3]], t: &[usize; 4]) -> f64 {
    let mut h: f64 = 0.0;
    for a in 0..4 {
        for b in a + 1..4 {
            h = h.max(norm(sub(vertices[t[a]], vertices[t[b]])));
        }
    }
    h
}

fn triangle_area(vertices: &[[f64; 3]], f: &[usize; 3]) -> f64 {
    0.5 * norm(cross(
        sub(vertices[f[1]], vertices[f[0]]),
        sub(vertices[f[2]], vertices[f[0]]),
    ))
}

fn inradius(vertices: &[[f64; 3]], t: &[usize; 4], volume: f64) -> f64 {
    let surface: f64 = TET_FACES
        .iter()
        .map(|f| triangle_area(vertices, &f.map(|l| t[l])))
        .sum();
    3.0 * volume / surface
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn mesh(n: usize, grading: Grading, big_d: f64) -> ChannelMesh {
        let g = ChannelGeometry {
            grading,
            ..ChannelGeometry::uniform(1.0, n, big_d, 0.01)
        };
        ChannelMesh::build(&g).unwrap()
    }

    #[test]
    fn two_cubed_box_counts() {
        let m = mesh(2, Grading::Uniform, 0.5);
        assert_eq!(m.n_elements(), 48);
        assert_eq!(m.wall_faces().len(), 16);
        let bottom = m.wall_faces().iter().filter(|f| f.wall == Wall::Bottom).count();
        assert_eq!(bottom, 8);
        let vol: f64 = m.volumes().iter().sum();
        assert!((vol - 1.0).abs() < 1e-14);
        assert!(m.volumes().iter().all(|&v| v > 0.0));
        // D/2 - d = 0.24 is not a plane of the uniform n3 = 2 grid
        assert!(!m.interface_aligned());
        assert!(matches!(
            classify_regions(&m, 0.5, 0.01),
            Err(Error::StraddlingElement { .. })
        ));
    }

    #[test]
    fn global_h_of_quarter_cubes() {
        let m = mesh(4, Grading::Uniform, 0.5);
        assert!((m.h() - 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(m.diameters().iter().all(|&h| (h - m.h()).abs() < 1e-15));
    }

    #[test]
    fn refinement_halves_diameters_and_keeps_aspect_ratio() {
        let coarse = mesh(2, Grading::Uniform, 0.5);
        let fine = mesh(4, Grading::Uniform, 0.5);
        assert!((fine.h() / coarse.h() - 0.5).abs() < 1e-12);
        assert!((fine.aspect_ratio() - coarse.aspect_ratio()).abs() < 1e-12);
        let a = mesh(4, Grading::LayerAligned { wall_fraction: 0.25 }, 0.2);
        let b = mesh(8, Grading::LayerAligned { wall_fraction: 0.25 }, 0.2);
        assert!((b.h() / a.h() - 0.5).abs() < 1e-12);
        assert!((b.aspect_ratio() - a.aspect_ratio()).abs() < 1e-9);
    }

    #[test]
    fn aligned_grading_puts_planes_on_interfaces() {
        let m = mesh(8, Grading::LayerAligned { wall_fraction: 0.25 }, 0.2);
        let z = m.z_planes();
        assert!((z[2] - 0.09).abs() < 1e-15);
        assert!((z[6] - 0.91).abs() < 1e-15);
        assert!(m.interface_aligned());
        let regions = classify_regions(&m, 0.2, 0.01).unwrap();
        assert_eq!(regions, m.regions());
        let wall = regions.iter().filter(|&&r| r == Region::WallLayer).count();
        assert_eq!(wall, 4 * 8 * 8 * 6);
    }

    #[test]
    fn misaligned_grading_is_rejected() {
        let g = ChannelGeometry {
            grading: Grading::LayerAligned { wall_fraction: 0.3 },
            ..ChannelGeometry::uniform(1.0, 4, 0.2, 0.01)
        };
        assert!(matches!(ChannelMesh::build(&g), Err(Error::InvalidMesh(_))));
        let g = ChannelGeometry {
            grading: Grading::LayerAligned { wall_fraction: 0.5 },
            ..ChannelGeometry::uniform(1.0, 4, 0.2, 0.01)
        };
        assert!(ChannelMesh::build(&g).is_err());
    }

    #[test]
    fn invalid_dimensions() {
        for g in [
            ChannelGeometry::uniform(0.0, 2, 0.2, 0.01),
            ChannelGeometry::uniform(1.0, 1, 0.2, 0.01),
            ChannelGeometry::uniform(1.0, 2, 0.2, 0.0),
            ChannelGeometry::uniform(1.0, 2, 0.02, 0.01),
        ] {
            assert!(ChannelMesh::build(&g).is_err(), "{g:?}");
        }
    }

    #[test]
    fn centroid_rule_examples() {
        assert_eq!(region_of_centroid(0.05, 0.24), Region::WallLayer);
        assert_eq!(region_of_centroid(0.5, 0.24), Region::Interior);
        assert_eq!(region_of_centroid(0.77, 0.24), Region::WallLayer);
    }

    #[test]
    fn wall_distance_examples() {
        assert!((wall_distance(0.0, 0.01) - 0.01).abs() < 1e-15);
        assert!((wall_distance(0.5, 0.01) - 0.51).abs() < 1e-15);
        assert!((wall_distance(0.9, 0.01) - 0.11).abs() < 1e-15);
    }

    #[test]
    fn periodic_pairs_are_translations() {
        let m = mesh(3, Grading::Uniform, 0.5);
        for p in m.periodic_pairs() {
            let d = sub(m.vertices()[p.image], m.vertices()[p.source]);
            let expected = match p.direction {
                PeriodicDirection::X1 => [1.0, 0.0, 0.0],
                PeriodicDirection::X2 => [0.0, 1.0, 0.0],
            };
            assert_eq!(d, expected);
            assert_eq!(m.periodic_master(p.image), m.periodic_master(p.source));
        }
    }

    /// Every face shared by exactly two elements after periodic identification,
    /// except the wall faces.
    #[test]
    fn conforming_after_identification() {
        let m = mesh(3, Grading::LayerAligned { wall_fraction: 1.0 / 3.0 }, 0.3);
        let [n1, n2, _] = m.subdivisions();
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for t in m.tetrahedra() {
            for f in TET_FACES {
                // doubled lattice coordinates of the face centroid identify it uniquely
                let mut key = [0usize; 3];
                for &l in &f {
                    let [i, j, k] = m.lattice()[t[l]];
                    key[0] += i;
                    key[1] += j;
                    key[2] += k;
                }
                key[0] %= 3 * n1;
                key[1] %= 3 * n2;
                *faces.entry(key).or_default() += 1;
            }
        }
        let singles = faces.values().filter(|&&c| c == 1).count();
        assert!(faces.values().all(|&c| c == 1 || c == 2));
        assert_eq!(singles, m.wall_faces().len());
    }

    #[test]
    fn locate_recovers_points() {
        let m = mesh(4, Grading::LayerAligned { wall_fraction: 0.25 }, 0.2);
        for p in [[0.1, 0.7, 0.05], [0.99, 0.01, 0.5], [1.3, -0.2, 0.95]] {
            let (e, lam) = m.locate(p).unwrap();
            assert!(lam.iter().all(|&l| l > -1e-12));
            let t = m.tetrahedra()[e];
            let mut x = [0.0; 3];
            for a in 0..4 {
                for c in 0..3 {
                    x[c] += lam[a] * m.vertices()[t[a]][c];
                }
            }
            let wrapped = [p[0].rem_euclid(1.0), p[1].rem_euclid(1.0), p[2]];
            for c in 0..3 {
                assert!((x[c] - wrapped[c]).abs() < 1e-12);
            }
        }
        assert!(m.locate([0.5, 0.5, 1.5]).is_none());
    }
}
