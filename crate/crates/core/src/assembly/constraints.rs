//! Dirichlet data, the velocity–pressure saddle system, and its constrained
//! square form with a mean-zero pressure multiplier.

use std::collections::BTreeMap;
use std::fmt;

use super::{AssemblyError, SharedField, SparseMatrix};
use crate::spaces::TaylorHoodSpace;

/// Ordered list of `(marker, boundary value)` pairs.
#[derive(Clone, Default)]
pub struct DirichletConditions {
    entries: Vec<(String, SharedField)>,
}

impl fmt::Debug for DirichletConditions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter().map(|e| &e.0)).finish()
    }
}

impl DirichletConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, marker: impl Into<String>, value: SharedField) -> Self {
        self.entries.push((marker.into(), value));
        self
    }

    /// Zero velocity on each listed marker.
    pub fn homogeneous<S: AsRef<str>>(markers: &[S]) -> Self {
        markers.iter().fold(Self::new(), |bc, m| {
            bc.with(m.as_ref(), std::sync::Arc::new(|_, _| [0.0, 0.0]))
        })
    }

    pub fn markers(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same markers with zero data.
    pub fn homogenized(&self) -> Self {
        let markers: Vec<&str> = self.markers().collect();
        Self::homogeneous(&markers)
    }

    /// Constrained velocity DOFs and their values at time `t`.
    ///
    /// A node reached from several markers must receive the same value from
    /// each; otherwise a conflict error names both markers.
    pub fn evaluate(&self, space: &TaylorHoodSpace, t: f64) -> Result<BTreeMap<usize, f64>, AssemblyError> {
        let mut values: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for (which, (marker, f)) in self.entries.iter().enumerate() {
            for node in space.boundary_nodes(marker)? {
                let x = space.node_coords()[node];
                let v = f(x, t);
                for (c, &vc) in v.iter().enumerate() {
                    if !vc.is_finite() {
                        return Err(AssemblyError::Evaluation { x: x[0], y: x[1], t });
                    }
                    let dof = 2 * node + c;
                    match values.get(&dof) {
                        Some(&(prev, from)) => {
                            let scale = 1f64.max(prev.abs()).max(vc.abs());
                            if (prev - vc).abs() > 1e-12 * scale {
                                return Err(AssemblyError::ConstraintConflict {
                                    x: x[0],
                                    y: x[1],
                                    component: c,
                                    first: prev,
                                    second: vc,
                                    first_marker: self.entries[from].0.clone(),
                                    second_marker: marker.clone(),
                                });
                            }
                        }
                        None => {
                            values.insert(dof, (vc, which));
                        }
                    }
                }
            }
        }
        Ok(values.into_iter().map(|(k, (v, _))| (k, v)).collect())
    }
}

/// Unconstrained blocks of
/// `[[A, −Bᵀ, 0], [−B, 0, m], [0, mᵀ, 0]] (u, P, λ) = (rhs_u, rhs_p, 0)`.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub m: Vec<f64>,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
}

/// Square system after Dirichlet elimination, ordered `(u, P, λ)`.
#[derive(Clone, Debug)]
pub struct ConstrainedSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub n_velocity: usize,
    pub n_pressure: usize,
    /// Sorted constrained velocity DOFs.
    pub constrained: Vec<usize>,
}

impl ConstrainedSystem {
    pub fn size(&self) -> usize {
        self.n_velocity + self.n_pressure + 1
    }

    /// Splits a solution into velocity, pressure, and the multiplier.
    pub fn split<'v>(&self, x: &'v [f64]) -> (&'v [f64], &'v [f64], f64) {
        let (u, rest) = x.split_at(self.n_velocity);
        let (p, lam) = rest.split_at(self.n_pressure);
        (u, p, lam[0])
    }
}

/// Evaluates the boundary data at `t` and eliminates it symmetrically.
pub fn apply_constraints(
    space: &TaylorHoodSpace,
    system: &SaddleSystem,
    dirichlet: &DirichletConditions,
    t: f64,
) -> Result<ConstrainedSystem, AssemblyError> {
    let values = dirichlet.evaluate(space, t)?;
    Ok(apply_constraint_values(system, &values))
}

/// Lift-and-eliminate: constrained rows become identity rows, constrained
/// columns move to the right-hand side. Eliminated entries are dropped from
/// the pattern, so the pattern depends only on the constrained set.
pub fn apply_constraint_values(system: &SaddleSystem, values: &BTreeMap<usize, f64>) -> ConstrainedSystem {
    let nv = system.a.n_rows();
    let np = system.b.n_rows();
    let n = nv + np + 1;
    assert_eq!(system.a.n_cols(), nv);
    assert_eq!(system.b.n_cols(), nv);
    assert_eq!(system.m.len(), np);
    let mut fixed: Vec<Option<f64>> = vec![None; nv];
    for (&dof, &v) in values {
        fixed[dof] = Some(v);
    }
    let bt = system.b.transpose();
    let nnz_guess = system.a.nnz() + 2 * system.b.nnz() + 2 * np;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(nnz_guess);
    let mut vals = Vec::with_capacity(nnz_guess);
    let mut rhs = Vec::with_capacity(n);
    row_ptr.push(0);

    for i in 0..nv {
        if let Some(g) = fixed[i] {
            col_idx.push(i);
            vals.push(1.0);
            rhs.push(g);
        } else {
            let mut r = system.rhs_u[i];
            let (cols, a) = system.a.row(i);
            for (&j, &aij) in cols.iter().zip(a) {
                match fixed[j] {
                    Some(g) => r -= aij * g,
                    None => {
                        col_idx.push(j);
                        vals.push(aij);
                    }
                }
            }
            let (cols, b) = bt.row(i);
            for (&k, &bik) in cols.iter().zip(b) {
                col_idx.push(nv + k);
                vals.push(-bik);
            }
            rhs.push(r);
        }
        row_ptr.push(col_idx.len());
    }
    for k in 0..np {
        let mut r = system.rhs_p[k];
        let (cols, b) = system.b.row(k);
        for (&j, &bkj) in cols.iter().zip(b) {
            match fixed[j] {
                Some(g) => r += bkj * g,
                None => {
                    col_idx.push(j);
                    vals.push(-bkj);
                }
            }
        }
        col_idx.push(n - 1);
        vals.push(system.m[k]);
        rhs.push(r);
        row_ptr.push(col_idx.len());
    }
    for (k, &mk) in system.m.iter().enumerate() {
        col_idx.push(nv + k);
        vals.push(mk);
    }
    rhs.push(0.0);
    row_ptr.push(col_idx.len());

    let symmetric = system.a.is_symmetric();
    ConstrainedSystem {
        matrix: SparseMatrix::from_parts_unchecked(n, n, row_ptr, col_idx, vals, symmetric),
        rhs,
        n_velocity: nv,
        n_pressure: np,
        constrained: values.keys().copied().collect(),
    }
}
