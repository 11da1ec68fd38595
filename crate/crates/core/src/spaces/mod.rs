//! Taylor–Hood P2/P1 spaces on a [`Mesh`].
//!
//! Scalar P2 nodes are numbered vertices first, then edge midpoints in sorted
//! edge-key order. Velocity DOFs interleave components per node
//! (`2·node + component`); pressure DOFs are the vertex indices.

pub mod basis;
mod quadrature;

use thiserror::Error;

use crate::mesh::{edge_key, Mesh, MeshError};
use crate::Point;

pub use basis::{Tabulation, P2_LOCAL};
pub use quadrature::{conical_rule, quadrature_rule, QuadratureRule, DEFAULT_DEGREE};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value at node ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("point ({0}, {1}) lies outside the mesh")]
    OutsideMesh(f64, f64),
    #[error("coefficient vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Affine map data of one triangle: `x = origin + J ξ`.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    pub origin: Point,
    pub jacobian: [[f64; 2]; 2],
    /// `J^{-T}`, maps reference gradients to physical gradients.
    pub inv_jacobian_t: [[f64; 2]; 2],
    /// `det J`, twice the triangle area.
    pub det: f64,
}

impl CellGeometry {
    fn new(a: Point, b: Point, c: Point) -> Self {
        let j = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_t = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        Self {
            origin: a,
            jacobian: j,
            inv_jacobian_t: inv_t,
            det,
        }
    }

    #[inline]
    pub fn map(&self, l: [f64; 3]) -> Point {
        let (xi, eta) = (l[1], l[2]);
        [
            self.origin[0] + self.jacobian[0][0] * xi + self.jacobian[0][1] * eta,
            self.origin[1] + self.jacobian[1][0] * xi + self.jacobian[1][1] * eta,
        ]
    }

    #[inline]
    pub fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let m = &self.inv_jacobian_t;
        [
            m[0][0] * g[0] + m[0][1] * g[1],
            m[1][0] * g[0] + m[1][1] * g[1],
        ]
    }

    /// Barycentric coordinates of a physical point.
    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // ξ = J^{-1} d, and J^{-1} is the transpose of inv_jacobian_t.
        let m = &self.inv_jacobian_t;
        let xi = m[0][0] * d[0] + m[1][0] * d[1];
        let eta = m[0][1] * d[0] + m[1][1] * d[1];
        [1.0 - xi - eta, xi, eta]
    }
}

/// P2 velocity / P1 pressure DOF maps and cell geometry. Immutable once built.
#[derive(Clone, Debug)]
pub struct TaylorHoodSpace {
    mesh: Mesh,
    edges: Vec<[usize; 2]>,
    cell_nodes: Vec<[usize; P2_LOCAL]>,
    node_coords: Vec<Point>,
    geometry: Vec<CellGeometry>,
    neighbors: Vec<[Option<usize>; 3]>,
}

/// Builds the Taylor–Hood DOF maps for a validated mesh.
pub fn build_taylor_hood(mesh: Mesh) -> TaylorHoodSpace {
    let nv = mesh.n_vertices();
    let mut edges: Vec<[usize; 2]> = mesh
        .triangles()
        .iter()
        .flat_map(|t| basis::P2_EDGE_VERTICES.map(|[a, b]| edge_key(t[a], t[b])))
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let edge_index = |a: usize, b: usize| {
        edges
            .binary_search(&edge_key(a, b))
            .expect("every triangle edge is in the edge list")
    };
    let mut cell_nodes = Vec::with_capacity(mesh.n_triangles());
    let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); edges.len()];
    for (k, t) in mesh.triangles().iter().enumerate() {
        let mut nodes = [0usize; P2_LOCAL];
        nodes[..3].copy_from_slice(t);
        for (e, [a, b]) in basis::P2_EDGE_VERTICES.iter().enumerate() {
            let id = edge_index(t[*a], t[*b]);
            nodes[3 + e] = nv + id;
            owners[id].push((k, e));
        }
        cell_nodes.push(nodes);
    }
    let mut neighbors = vec![[None; 3]; mesh.n_triangles()];
    for own in &owners {
        if let [(k0, e0), (k1, e1)] = own[..] {
            neighbors[k0][e0] = Some(k1);
            neighbors[k1][e1] = Some(k0);
        }
    }
    let verts = mesh.vertices();
    let mut node_coords = verts.to_vec();
    node_coords.extend(edges.iter().map(|&[a, b]| {
        [
            0.5 * (verts[a][0] + verts[b][0]),
            0.5 * (verts[a][1] + verts[b][1]),
        ]
    }));
    let geometry = mesh
        .triangles()
        .iter()
        .map(|t| CellGeometry::new(verts[t[0]], verts[t[1]], verts[t[2]]))
        .collect();
    TaylorHoodSpace {
        mesh,
        edges,
        cell_nodes,
        node_coords,
        geometry,
        neighbors,
    }
}

impl TaylorHoodSpace {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_cells(&self) -> usize {
        self.cell_nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of scalar P2 nodes (vertices + edges).
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_vertices()
    }

    /// Total Taylor–Hood DOF count (velocity + pressure).
    pub fn n_dofs(&self) -> usize {
        self.n_velocity() + self.n_pressure()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize; P2_LOCAL] {
        &self.cell_nodes[cell]
    }

    /// Velocity DOFs of a cell, ordered `2·local_node + component`.
    pub fn cell_velocity_dofs(&self, cell: usize) -> [usize; 2 * P2_LOCAL] {
        let n = &self.cell_nodes[cell];
        std::array::from_fn(|i| 2 * n[i / 2] + i % 2)
    }

    pub fn cell_pressure_dofs(&self, cell: usize) -> [usize; 3] {
        self.mesh.triangles()[cell]
    }

    pub fn geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    pub fn check_velocity(&self, u: &[f64]) -> Result<(), SpaceError> {
        check_len(u, self.n_velocity())
    }

    pub fn check_pressure(&self, p: &[f64]) -> Result<(), SpaceError> {
        check_len(p, self.n_pressure())
    }

    /// Scalar P2 nodes lying on boundary edges with the given marker, sorted.
    pub fn boundary_nodes(&self, marker: &str) -> Result<Vec<usize>, SpaceError> {
        let nv = self.mesh.n_vertices();
        let mut nodes = Vec::new();
        for e in self.mesh.edges_with_marker(marker)? {
            let [a, b] = e.vertices;
            let id = self
                .edges
                .binary_search(&edge_key(a, b))
                .expect("boundary edges are mesh edges");
            nodes.extend([a, b, nv + id]);
        }
        nodes.sort_unstable();
        nodes.dedup();
        Ok(nodes)
    }

    /// Cell containing `x` and its barycentric coordinates.
    ///
    /// Walks across neighbours from `hint`, then falls back to a linear scan.
    pub fn locate(&self, x: Point, hint: Option<usize>) -> Option<(usize, [f64; 3])> {
        let tol = -1e-12;
        let mut cell = hint.unwrap_or(0).min(self.n_cells() - 1);
        for _ in 0..self.n_cells().min(4096) {
            let l = self.geometry[cell].barycentric(x);
            let (worst, &lmin) = l
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("three coordinates");
            if lmin >= tol {
                return Some((cell, l));
            }
            // The edge opposite vertex `worst` is local edge (worst + 1) % 3.
            match self.neighbors[cell][(worst + 1) % 3] {
                Some(next) => cell = next,
                None => break,
            }
        }
        (0..self.n_cells()).find_map(|k| {
            let l = self.geometry[k].barycentric(x);
            l.iter().all(|&v| v >= tol).then_some((k, l))
        })
    }
}

fn check_len(v: &[f64], expected: usize) -> Result<(), SpaceError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(SpaceError::LengthMismatch {
            expected,
            found: v.len(),
        })
    }
}

/// Nodal P2 interpolant of a vector field at time `t`.
pub fn interpolate_velocity<F>(space: &TaylorHoodSpace, t: f64, f: F) -> Result<Vec<f64>, SpaceError>
where
    F: Fn(Point, f64) -> [f64; 2],
{
    let mut u = vec![0.0; space.n_velocity()];
    for (i, &x) in space.node_coords.iter().enumerate() {
        let v = f(x, t);
        if !v[0].is_finite() || !v[1].is_finite() {
            return Err(SpaceError::NonFinite { x: x[0], y: x[1] });
        }
        u[2 * i] = v[0];
        u[2 * i + 1] = v[1];
    }
    Ok(u)
}

/// Nodal P1 interpolant of a scalar field at time `t`.
pub fn interpolate_pressure<F>(space: &TaylorHoodSpace, t: f64, f: F) -> Result<Vec<f64>, SpaceError>
where
    F: Fn(Point, f64) -> f64,
{
    space
        .mesh
        .vertices()
        .iter()
        .map(|&x| {
            let v = f(x, t);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(SpaceError::NonFinite { x: x[0], y: x[1] })
            }
        })
        .collect()
}

/// Value of a P2 velocity field at a point.
pub fn evaluate_velocity(space: &TaylorHoodSpace, u: &[f64], x: Point) -> Result<[f64; 2], SpaceError> {
    space.check_velocity(u)?;
    let (cell, l) = space
        .locate(x, None)
        .ok_or(SpaceError::OutsideMesh(x[0], x[1]))?;
    let phi = basis::p2_values(l);
    let nodes = space.cell_nodes(cell);
    let mut v = [0.0; 2];
    for a in 0..P2_LOCAL {
        v[0] += phi[a] * u[2 * nodes[a]];
        v[1] += phi[a] * u[2 * nodes[a] + 1];
    }
    Ok(v)
}

/// Value of a P1 pressure field at a point.
pub fn evaluate_pressure(space: &TaylorHoodSpace, p: &[f64], x: Point) -> Result<f64, SpaceError> {
    space.check_pressure(p)?;
    let (cell, l) = space
        .locate(x, None)
        .ok_or(SpaceError::OutsideMesh(x[0], x[1]))?;
    let verts = space.cell_pressure_dofs(cell);
    Ok((0..3).map(|a| l[a] * p[verts[a]]).sum())
}

/// Discrete solution at one time level. `p` holds the EMAC pressure
/// `P = p_kinematic − ½|u|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn zeros(space: &TaylorHoodSpace, t: f64) -> Self {
        Self {
            u: vec![0.0; space.n_velocity()],
            p: vec![0.0; space.n_pressure()],
            t,
        }
    }

    /// Checks lengths and finiteness against a space.
    pub fn validate(&self, space: &TaylorHoodSpace) -> Result<(), SpaceError> {
        space.check_velocity(&self.u)?;
        space.check_pressure(&self.p)?;
        if self.u.iter().chain(&self.p).all(|v| v.is_finite()) && self.t.is_finite() {
            Ok(())
        } else {
            Err(SpaceError::InvalidParameter("state holds non-finite values".into()))
        }
    }
}
