//! Conforming triangulations with tagged boundary edges.
//!
//! Every boundary edge carries exactly one integer tag, and every tag maps to a
//! marker name. The reserved name [`ALL_MARKER`] selects the whole boundary.

mod msh;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use thiserror::Error;

use crate::Point;

pub use msh::{load_msh, parse_msh, sidecar_path, write_msh, MarkerTable};

/// Marker name that selects every boundary edge regardless of its tag.
pub const ALL_MARKER: &str = "all";

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown boundary marker `{0}`")]
    UnknownMarker(String),
}

/// A boundary edge (two vertex indices) with its marker tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: u32,
}

/// An immutable, validated triangulation.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    markers: BTreeMap<u32, String>,
}

impl Mesh {
    /// Builds a mesh and checks all structural invariants:
    /// finite coordinates, counter-clockwise non-degenerate triangles, no
    /// duplicate vertices, a manifold edge structure, and boundary edges that
    /// coincide exactly with the edges owned by a single triangle.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        markers: BTreeMap<u32, String>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            vertices,
            triangles,
            boundary_edges,
            markers,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), MeshError> {
        let invalid = |msg: String| Err(MeshError::Invalid(msg));
        if self.triangles.is_empty() {
            return invalid("mesh has no triangles".into());
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return invalid(format!("vertex {i} has non-finite coordinates {v:?}"));
            }
        }
        let diameter = self.diameter();
        if diameter <= 0.0 {
            return invalid("mesh has zero extent".into());
        }
        let nv = self.vertices.len();
        let min_area = 1e-14 * diameter * diameter;
        for (k, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return invalid(format!("triangle {k} references a missing vertex: {tri:?}"));
            }
            let area = self.signed_area(k);
            if area <= min_area {
                return invalid(format!(
                    "triangle {k} has non-positive signed area {area:e}"
                ));
            }
        }
        self.check_duplicate_vertices(1e-12 * diameter)?;

        let mut edge_count: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *edge_count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return invalid(format!("edge {e:?} is shared by more than two triangles"));
        }
        let mut listed: HashMap<[usize; 2], u32> = HashMap::new();
        for be in &self.boundary_edges {
            let key = edge_key(be.vertices[0], be.vertices[1]);
            if edge_count.get(&key) != Some(&1) {
                return invalid(format!(
                    "boundary edge {:?} does not belong to exactly one triangle",
                    be.vertices
                ));
            }
            if listed.insert(key, be.tag).is_some() {
                return invalid(format!("boundary edge {:?} listed twice", be.vertices));
            }
            if !self.markers.contains_key(&be.tag) {
                return invalid(format!(
                    "boundary edge {:?} has undeclared tag {}",
                    be.vertices, be.tag
                ));
            }
        }
        if let Some((e, _)) = edge_count
            .iter()
            .find(|(e, &c)| c == 1 && !listed.contains_key(*e))
        {
            return invalid(format!("boundary edge {e:?} carries no marker"));
        }
        if self.markers.values().any(|n| n == ALL_MARKER) {
            return invalid(format!("marker name `{ALL_MARKER}` is reserved"));
        }
        let mut names: Vec<&String> = self.markers.values().collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return invalid("marker names must be unique".into());
        }
        Ok(())
    }

    fn check_duplicate_vertices(&self, tol: f64) -> Result<(), MeshError> {
        let mut order: Vec<usize> = (0..self.vertices.len()).collect();
        order.sort_by(|&a, &b| self.vertices[a][0].total_cmp(&self.vertices[b][0]));
        for (pos, &a) in order.iter().enumerate() {
            let pa = self.vertices[a];
            for &b in &order[pos + 1..] {
                let pb = self.vertices[b];
                if pb[0] - pa[0] > tol {
                    break;
                }
                if (pb[1] - pa[1]).abs() <= tol {
                    return Err(MeshError::Invalid(format!(
                        "vertices {a} and {b} coincide at {pa:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Tag → name table.
    pub fn markers(&self) -> &BTreeMap<u32, String> {
        &self.markers
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn has_marker(&self, name: &str) -> bool {
        name == ALL_MARKER || self.markers.values().any(|n| n == name)
    }

    /// Boundary edges carrying the named marker (`"all"` selects every edge).
    pub fn edges_with_marker(&self, name: &str) -> Result<Vec<BoundaryEdge>, MeshError> {
        if name == ALL_MARKER {
            return Ok(self.boundary_edges.clone());
        }
        let tag = self
            .markers
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(&t, _)| t)
            .ok_or_else(|| MeshError::UnknownMarker(name.to_string()))?;
        Ok(self
            .boundary_edges
            .iter()
            .copied()
            .filter(|e| e.tag == tag)
            .collect())
    }

    pub fn signed_area(&self, triangle: usize) -> f64 {
        let [a, b, c] = self.triangles[triangle].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|k| self.signed_area(k)).sum()
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    /// Largest edge length over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |k| {
                    let a = self.vertices[t[k]];
                    let b = self.vertices[t[(k + 1) % 3]];
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                })
            })
            .fold(0.0, f64::max)
    }
}

/// Undirected edge key with the smaller vertex first.
pub fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Side tags used by [`generate_rectangle`].
pub const TAG_BOTTOM: u32 = 1;
pub const TAG_RIGHT: u32 = 2;
pub const TAG_TOP: u32 = 3;
pub const TAG_LEFT: u32 = 4;

/// Uniform `nx × ny` grid on `[xmin, xmax] × [ymin, ymax]`, each cell split
/// along its lower-left to upper-right diagonal.
///
/// Boundary edges are tagged `bottom`, `right`, `top` and `left`; the whole
/// boundary is reachable through the reserved marker `all`.
pub fn generate_rectangle(nx: usize, ny: usize, bounds: [f64; 4]) -> Result<Mesh, MeshError> {
    let [xmin, xmax, ymin, ymax] = bounds;
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidParameter(format!(
            "cell counts must be positive, got {nx}×{ny}"
        )));
    }
    if !bounds.iter().all(|b| b.is_finite()) || xmax <= xmin || ymax <= ymin {
        return Err(MeshError::InvalidParameter(format!(
            "bounds must satisfy xmin < xmax and ymin < ymax, got {bounds:?}"
        )));
    }
    let coord = |lo: f64, hi: f64, i: usize, n: usize| {
        if i == n {
            hi
        } else {
            lo + (hi - lo) * (i as f64) / (n as f64)
        }
    };
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([coord(xmin, xmax, i, nx), coord(ymin, ymax, j, ny)]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, 0), vid(i + 1, 0)],
            tag: TAG_BOTTOM,
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(nx, j), vid(nx, j + 1)],
            tag: TAG_RIGHT,
        });
    }
    for i in (0..nx).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i + 1, ny), vid(i, ny)],
            tag: TAG_TOP,
        });
    }
    for j in (0..ny).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(0, j + 1), vid(0, j)],
            tag: TAG_LEFT,
        });
    }
    let markers = BTreeMap::from([
        (TAG_BOTTOM, "bottom".to_string()),
        (TAG_RIGHT, "right".to_string()),
        (TAG_TOP, "top".to_string()),
        (TAG_LEFT, "left".to_string()),
    ]);
    Mesh::new(vertices, triangles, boundary_edges, markers)
}
