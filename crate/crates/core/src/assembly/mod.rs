//! Discrete operators on a Taylor–Hood space: mass, viscous stiffness,
//! divergence, forcing, the EMAC convective form with its Jacobian, and the
//! constrained saddle-point system.
//!
//! All loops run over cells in index order, so results are bitwise
//! reproducible.

mod constraints;
mod sparse;

use std::sync::Arc;

use thiserror::Error;

use crate::mesh::MeshError;
use crate::spaces::basis::p2_values;
use crate::spaces::{conical_rule, quadrature_rule, SpaceError, Tabulation, TaylorHoodSpace, DEFAULT_DEGREE, P2_LOCAL};
use crate::Point;

pub use constraints::{
    apply_constraint_values, apply_constraints, ConstrainedSystem, DirichletConditions, SaddleSystem,
};
pub use sparse::SparseMatrix;

/// Time-dependent vector field `(x, t) ↦ f(x, t)`.
pub type VectorField = dyn Fn(Point, f64) -> [f64; 2] + Send + Sync;
pub type SharedField = Arc<VectorField>;

const NV: usize = 2 * P2_LOCAL;
/// Load vectors use a finer rule than the operators since the data need not
/// be polynomial.
const LOAD_POINTS_PER_AXIS: usize = 8;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("entry ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange { row: usize, col: usize, n_rows: usize, n_cols: usize },
    #[error("non-finite matrix entry")]
    NonFiniteEntry,
    #[error("malformed compressed sparse row arrays")]
    MalformedPattern,
    #[error("matrices do not share a sparsity pattern")]
    PatternMismatch,
    #[error("non-finite field value at ({x}, {y}), t = {t}")]
    Evaluation { x: f64, y: f64, t: f64 },
    #[error(
        "conflicting Dirichlet values at node ({x}, {y}) component {component}: \
         {first} from '{first_marker}', {second} from '{second_marker}'"
    )]
    ConstraintConflict {
        x: f64,
        y: f64,
        component: usize,
        first: f64,
        second: f64,
        first_marker: String,
        second_marker: String,
    },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Velocity value and gradient `g[c][d] = ∂_d u_c` at one quadrature point.
#[derive(Clone, Copy, Debug, Default)]
struct PointValue {
    u: [f64; 2],
    g: [[f64; 2]; 2],
}

impl PointValue {
    fn div(&self) -> f64 {
        self.g[0][0] + self.g[1][1]
    }

    /// `2 D(u)`.
    fn two_d(&self) -> [[f64; 2]; 2] {
        let g = &self.g;
        [
            [2.0 * g[0][0], g[0][1] + g[1][0]],
            [g[0][1] + g[1][0], 2.0 * g[1][1]],
        ]
    }
}

/// Precomputed quadrature data and fixed sparsity patterns for one space.
///
/// Velocity–velocity matrices all share one pattern (the union of element
/// couplings), so operators can be combined value by value.
pub struct Assembler<'a> {
    space: &'a TaylorHoodSpace,
    tab: Tabulation,
    nq: usize,
    /// `|det J| · w_q`, indexed `cell · nq + q`.
    jxw: Vec<f64>,
    /// Physical P2 gradients, indexed `cell · nq + q`.
    grads: Vec<[[f64; 2]; P2_LOCAL]>,
    /// Physical quadrature points.
    points: Vec<Point>,
    vv_row_ptr: Vec<usize>,
    vv_col_idx: Vec<usize>,
    /// Position of local entry `(i, j)` at `cell · 144 + 12 i + j`.
    vv_pos: Vec<usize>,
    pv_row_ptr: Vec<usize>,
    pv_col_idx: Vec<usize>,
    /// Position of local entry `(i, j)` at `cell · 36 + 12 i + j`.
    pv_pos: Vec<usize>,
}

fn build_pattern<const R: usize, const C: usize>(
    n_rows: usize,
    n_cells: usize,
    rows_of: impl Fn(usize) -> [usize; R],
    cols_of: impl Fn(usize) -> [usize; C],
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
    for k in 0..n_cells {
        let cols = cols_of(k);
        for r in rows_of(k) {
            adj[r].extend_from_slice(&cols);
        }
    }
    let mut row_ptr = Vec::with_capacity(n_rows + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::new();
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
        col_idx.extend_from_slice(row);
        row_ptr.push(col_idx.len());
    }
    let mut pos = Vec::with_capacity(n_cells * R * C);
    for k in 0..n_cells {
        let cols = cols_of(k);
        for r in rows_of(k) {
            let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for c in cols {
                let off = row.binary_search(&c).expect("pattern contains element couplings");
                pos.push(row_ptr[r] + off);
            }
        }
    }
    (row_ptr, col_idx, pos)
}

impl<'a> Assembler<'a> {
    /// Assembler with the default degree-5 rule.
    pub fn new(space: &'a TaylorHoodSpace) -> Self {
        Self::with_degree(space, DEFAULT_DEGREE).expect("default quadrature degree is supported")
    }

    pub fn with_degree(space: &'a TaylorHoodSpace, degree: usize) -> Result<Self, AssemblyError> {
        let tab = Tabulation::new(quadrature_rule(degree)?);
        let nq = tab.len();
        let n_cells = space.n_cells();
        let mut jxw = Vec::with_capacity(n_cells * nq);
        let mut grads = Vec::with_capacity(n_cells * nq);
        let mut points = Vec::with_capacity(n_cells * nq);
        for k in 0..n_cells {
            let geo = space.geometry(k);
            for q in 0..nq {
                jxw.push(geo.det.abs() * tab.rule.weights[q]);
                grads.push(tab.p2_grad[q].map(|g| geo.gradient(g)));
                points.push(geo.map(tab.rule.points[q]));
            }
        }
        let (vv_row_ptr, vv_col_idx, vv_pos) = build_pattern(
            space.n_velocity(),
            n_cells,
            |k| space.cell_velocity_dofs(k),
            |k| space.cell_velocity_dofs(k),
        );
        let (pv_row_ptr, pv_col_idx, pv_pos) = build_pattern(
            space.n_pressure(),
            n_cells,
            |k| space.cell_pressure_dofs(k),
            |k| space.cell_velocity_dofs(k),
        );
        Ok(Self {
            space,
            tab,
            nq,
            jxw,
            grads,
            points,
            vv_row_ptr,
            vv_col_idx,
            vv_pos,
            pv_row_ptr,
            pv_col_idx,
            pv_pos,
        })
    }

    pub fn space(&self) -> &'a TaylorHoodSpace {
        self.space
    }

    fn check(&self, u: &[f64]) {
        assert_eq!(u.len(), self.space.n_velocity(), "velocity vector length");
    }

    fn point_value(&self, cell: usize, q: usize, local: &[f64; NV]) -> PointValue {
        let phi = &self.tab.p2[q];
        let grad = &self.grads[cell * self.nq + q];
        let mut pv = PointValue::default();
        for a in 0..P2_LOCAL {
            for c in 0..2 {
                let coef = local[2 * a + c];
                pv.u[c] += phi[a] * coef;
                pv.g[c][0] += grad[a][0] * coef;
                pv.g[c][1] += grad[a][1] * coef;
            }
        }
        pv
    }

    fn gather(&self, cell: usize, u: &[f64]) -> [f64; NV] {
        self.space.cell_velocity_dofs(cell).map(|i| u[i])
    }

    fn vv_matrix(&self, symmetric: bool, local: impl Fn(usize, &mut [[f64; NV]; NV])) -> SparseMatrix {
        let mut values = vec![0.0; self.vv_col_idx.len()];
        let mut ke = [[0.0; NV]; NV];
        for k in 0..self.space.n_cells() {
            ke.iter_mut().for_each(|r| r.fill(0.0));
            local(k, &mut ke);
            let pos = &self.vv_pos[k * NV * NV..(k + 1) * NV * NV];
            for i in 0..NV {
                for j in 0..NV {
                    values[pos[NV * i + j]] += ke[i][j];
                }
            }
        }
        let n = self.space.n_velocity();
        SparseMatrix::from_parts_unchecked(
            n,
            n,
            self.vv_row_ptr.clone(),
            self.vv_col_idx.clone(),
            values,
            symmetric,
        )
    }

    /// Velocity mass matrix `M[(a,c),(b,c)] = ∫ φ_a φ_b`.
    pub fn mass(&self) -> SparseMatrix {
        self.vv_matrix(true, |k, ke| {
            for q in 0..self.nq {
                let w = self.jxw[k * self.nq + q];
                let phi = &self.tab.p2[q];
                for a in 0..P2_LOCAL {
                    for b in a..P2_LOCAL {
                        let v = w * phi[a] * phi[b];
                        ke[2 * a][2 * b] += v;
                        ke[2 * a + 1][2 * b + 1] += v;
                    }
                }
            }
            mirror_upper(ke);
        })
    }

    /// Viscous stiffness `ν ∫ ∇φ_a · ∇φ_b` per component.
    pub fn stiffness(&self, nu: f64) -> SparseMatrix {
        self.vv_matrix(true, |k, ke| {
            for q in 0..self.nq {
                let w = nu * self.jxw[k * self.nq + q];
                let g = &self.grads[k * self.nq + q];
                for a in 0..P2_LOCAL {
                    for b in a..P2_LOCAL {
                        let v = w * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                        ke[2 * a][2 * b] += v;
                        ke[2 * a + 1][2 * b + 1] += v;
                    }
                }
            }
            mirror_upper(ke);
        })
    }

    /// Divergence coupling `B[i, (b,d)] = ∫ q_i ∂_d φ_b`.
    pub fn divergence(&self) -> SparseMatrix {
        let mut values = vec![0.0; self.pv_col_idx.len()];
        for k in 0..self.space.n_cells() {
            let mut be = [[0.0; NV]; 3];
            for q in 0..self.nq {
                let w = self.jxw[k * self.nq + q];
                let g = &self.grads[k * self.nq + q];
                let psi = &self.tab.p1[q];
                for (i, row) in be.iter_mut().enumerate() {
                    for b in 0..P2_LOCAL {
                        row[2 * b] += w * psi[i] * g[b][0];
                        row[2 * b + 1] += w * psi[i] * g[b][1];
                    }
                }
            }
            let pos = &self.pv_pos[k * 3 * NV..(k + 1) * 3 * NV];
            for i in 0..3 {
                for j in 0..NV {
                    values[pos[NV * i + j]] += be[i][j];
                }
            }
        }
        SparseMatrix::from_parts_unchecked(
            self.space.n_pressure(),
            self.space.n_velocity(),
            self.pv_row_ptr.clone(),
            self.pv_col_idx.clone(),
            values,
            false,
        )
    }

    /// `∫ q_i` for every pressure basis function.
    pub fn pressure_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.space.n_pressure()];
        for k in 0..self.space.n_cells() {
            let verts = self.space.cell_pressure_dofs(k);
            for q in 0..self.nq {
                let w = self.jxw[k * self.nq + q];
                for (i, &v) in verts.iter().enumerate() {
                    m[v] += w * self.tab.p1[q][i];
                }
            }
        }
        m
    }

    /// Load vector `∫ f(t) · φ_i`.
    pub fn forcing(&self, f: &VectorField, t: f64) -> Result<Vec<f64>, AssemblyError> {
        let rule = conical_rule(LOAD_POINTS_PER_AXIS)?;
        let phi: Vec<[f64; P2_LOCAL]> = rule.points.iter().map(|&l| p2_values(l)).collect();
        let mut r = vec![0.0; self.space.n_velocity()];
        for k in 0..self.space.n_cells() {
            let dofs = self.space.cell_velocity_dofs(k);
            let geo = self.space.geometry(k);
            let det = geo.det.abs();
            for (q, &l) in rule.points.iter().enumerate() {
                let x = geo.map(l);
                let fv = f(x, t);
                if !fv[0].is_finite() || !fv[1].is_finite() {
                    return Err(AssemblyError::Evaluation { x: x[0], y: x[1], t });
                }
                let w = det * rule.weights[q];
                for a in 0..P2_LOCAL {
                    let s = w * phi[q][a];
                    r[dofs[2 * a]] += s * fv[0];
                    r[dofs[2 * a + 1]] += s * fv[1];
                }
            }
        }
        Ok(r)
    }

    /// `c(a, b, w) = 2(D(a) b, w) + ((∇·a) b, w)`.
    pub fn emac_trilinear(&self, a: &[f64], b: &[f64], w: &[f64]) -> f64 {
        self.check(a);
        self.check(b);
        self.check(w);
        self.integrate_triple(a, b, w, |pa, pb, pw| {
            let d = pa.two_d();
            let div = pa.div();
            (0..2)
                .map(|c| (d[c][0] * pb.u[0] + d[c][1] * pb.u[1] + div * pb.u[c]) * pw.u[c])
                .sum()
        })
    }

    /// `((a·∇) b, w)`.
    pub fn convective_trilinear(&self, a: &[f64], b: &[f64], w: &[f64]) -> f64 {
        self.integrate_triple(a, b, w, |pa, pb, pw| {
            (0..2)
                .map(|c| (pa.u[0] * pb.g[c][0] + pa.u[1] * pb.g[c][1]) * pw.u[c])
                .sum()
        })
    }

    /// `((∇·a) b, w)`.
    pub fn divergence_trilinear(&self, a: &[f64], b: &[f64], w: &[f64]) -> f64 {
        self.integrate_triple(a, b, w, |pa, pb, pw| {
            pa.div() * (pb.u[0] * pw.u[0] + pb.u[1] * pw.u[1])
        })
    }

    fn integrate_triple(
        &self,
        a: &[f64],
        b: &[f64],
        w: &[f64],
        integrand: impl Fn(&PointValue, &PointValue, &PointValue) -> f64,
    ) -> f64 {
        let mut total = 0.0;
        for k in 0..self.space.n_cells() {
            let (la, lb, lw) = (self.gather(k, a), self.gather(k, b), self.gather(k, w));
            for q in 0..self.nq {
                let pa = self.point_value(k, q, &la);
                let pb = self.point_value(k, q, &lb);
                let pw = self.point_value(k, q, &lw);
                total += self.jxw[k * self.nq + q] * integrand(&pa, &pb, &pw);
            }
        }
        total
    }

    /// `r_i = c(u, u, φ_i)`.
    pub fn emac_residual(&self, u: &[f64]) -> Vec<f64> {
        self.check(u);
        let mut r = vec![0.0; self.space.n_velocity()];
        for k in 0..self.space.n_cells() {
            let dofs = self.space.cell_velocity_dofs(k);
            let lu = self.gather(k, u);
            for q in 0..self.nq {
                let pv = self.point_value(k, q, &lu);
                let d = pv.two_d();
                let div = pv.div();
                let flux: [f64; 2] = std::array::from_fn(|c| {
                    d[c][0] * pv.u[0] + d[c][1] * pv.u[1] + div * pv.u[c]
                });
                let w = self.jxw[k * self.nq + q];
                for a in 0..P2_LOCAL {
                    let s = w * self.tab.p2[q][a];
                    r[dofs[2 * a]] += s * flux[0];
                    r[dofs[2 * a + 1]] += s * flux[1];
                }
            }
        }
        r
    }

    /// Exact derivative of [`Self::emac_residual`]: `J δ = c(δ, u, ·) + c(u, δ, ·)`.
    pub fn emac_jacobian(&self, u: &[f64]) -> SparseMatrix {
        self.check(u);
        self.vv_matrix(false, |k, ke| self.local_jacobian(k, u, ke))
    }

    fn local_jacobian(&self, k: usize, u: &[f64], ke: &mut [[f64; NV]; NV]) {
        let lu = self.gather(k, u);
        for q in 0..self.nq {
            let pv = self.point_value(k, q, &lu);
            let d = pv.two_d();
            let div = pv.div();
            let w = self.jxw[k * self.nq + q];
            let phi = &self.tab.p2[q];
            let g = &self.grads[k * self.nq + q];
            for b in 0..P2_LOCAL {
                let conv = pv.u[0] * g[b][0] + pv.u[1] * g[b][1];
                // Value of the linearized flux component c for direction φ_b e_d.
                let mut col = [[0.0; 2]; 2];
                for (c, row) in col.iter_mut().enumerate() {
                    for (dd, v) in row.iter_mut().enumerate() {
                        let diag = if c == dd { conv + div * phi[b] } else { 0.0 };
                        *v = diag + pv.u[dd] * g[b][c] + pv.u[c] * g[b][dd] + d[c][dd] * phi[b];
                    }
                }
                for a in 0..P2_LOCAL {
                    let s = w * phi[a];
                    for c in 0..2 {
                        for dd in 0..2 {
                            ke[2 * a + c][2 * b + dd] += s * col[c][dd];
                        }
                    }
                }
            }
        }
    }

    /// Adds `s · J(u)` into a matrix that uses the velocity pattern.
    pub fn add_emac_jacobian(&self, u: &[f64], s: f64, target: &mut SparseMatrix) -> Result<(), AssemblyError> {
        self.check(u);
        if target.row_ptr() != self.vv_row_ptr.as_slice() || target.col_idx() != self.vv_col_idx.as_slice() {
            return Err(AssemblyError::PatternMismatch);
        }
        let values = target.values_mut();
        let mut ke = [[0.0; NV]; NV];
        for k in 0..self.space.n_cells() {
            ke.iter_mut().for_each(|r| r.fill(0.0));
            self.local_jacobian(k, u, &mut ke);
            let pos = &self.vv_pos[k * NV * NV..(k + 1) * NV * NV];
            for i in 0..NV {
                for j in 0..NV {
                    values[pos[NV * i + j]] += s * ke[i][j];
                }
            }
        }
        target.set_symmetric(false);
        Ok(())
    }

    /// Calls `visit(x, u, ∇u, φ, ∇φ, jxw, dofs)` at every quadrature point.
    pub(crate) fn for_each_point(
        &self,
        u: &[f64],
        mut visit: impl FnMut(QuadPoint<'_>),
    ) {
        self.check(u);
        for k in 0..self.space.n_cells() {
            let dofs = self.space.cell_velocity_dofs(k);
            let lu = self.gather(k, u);
            for q in 0..self.nq {
                let pv = self.point_value(k, q, &lu);
                visit(QuadPoint {
                    cell: k,
                    x: self.points[k * self.nq + q],
                    u: pv.u,
                    grad_u: pv.g,
                    phi: &self.tab.p2[q],
                    psi: &self.tab.p1[q],
                    grad_phi: &self.grads[k * self.nq + q],
                    jxw: self.jxw[k * self.nq + q],
                    dofs,
                });
            }
        }
    }
}

/// Data available to per-quadrature-point visitors.
pub(crate) struct QuadPoint<'a> {
    pub cell: usize,
    #[allow(dead_code)]
    pub x: Point,
    pub u: [f64; 2],
    pub grad_u: [[f64; 2]; 2],
    pub phi: &'a [f64; P2_LOCAL],
    pub psi: &'a [f64; 3],
    pub grad_phi: &'a [[f64; 2]; P2_LOCAL],
    pub jxw: f64,
    pub dofs: [usize; NV],
}

pub fn assemble_mass(space: &TaylorHoodSpace) -> SparseMatrix {
    Assembler::new(space).mass()
}

pub fn assemble_stiffness(space: &TaylorHoodSpace, nu: f64) -> SparseMatrix {
    Assembler::new(space).stiffness(nu)
}

pub fn assemble_divergence(space: &TaylorHoodSpace) -> SparseMatrix {
    Assembler::new(space).divergence()
}

pub fn emac_trilinear(space: &TaylorHoodSpace, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    Assembler::new(space).emac_trilinear(a, b, c)
}

pub fn assemble_emac_residual(space: &TaylorHoodSpace, u: &[f64]) -> Vec<f64> {
    Assembler::new(space).emac_residual(u)
}

pub fn assemble_emac_jacobian(space: &TaylorHoodSpace, u: &[f64]) -> SparseMatrix {
    Assembler::new(space).emac_jacobian(u)
}

pub fn assemble_forcing(space: &TaylorHoodSpace, f: &VectorField, t: f64) -> Result<Vec<f64>, AssemblyError> {
    Assembler::new(space).forcing(f, t)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Copies the upper triangle of a local matrix onto its lower triangle.
fn mirror_upper(ke: &mut [[f64; NV]; NV]) {
    for i in 0..NV {
        for j in 0..i {
            ke[i][j] = ke[j][i];
        }
    }
}
