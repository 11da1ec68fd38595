//! Sparse direct solves of the constrained saddle system.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use super::SolverError;
use crate::assembly::{ConstrainedSystem, SparseMatrix};

pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 3;

struct CachedSymbolic {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: SymbolicLu<usize>,
}

/// LU solver that reuses the symbolic factorization while the sparsity
/// pattern is unchanged.
///
/// The CSR arrays of `A` are read as the CSC arrays of `Aᵀ`; factoring `Aᵀ`
/// and solving with its transpose gives `A x = b` without copying.
pub struct LinearSolver {
    tol: f64,
    cache: Option<CachedSymbolic>,
}

impl LinearSolver {
    pub fn new(tol: f64) -> Self {
        Self { tol, cache: None }
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    fn symbolic(&mut self, a: &SparseMatrix) -> Result<SymbolicLu<usize>, SolverError> {
        let reusable = self
            .cache
            .as_ref()
            .is_some_and(|c| c.row_ptr == a.row_ptr() && c.col_idx == a.col_idx());
        if !reusable {
            let n = a.n_rows();
            let view = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
            let lu = SymbolicLu::try_new(view).map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
            self.cache = Some(CachedSymbolic {
                row_ptr: a.row_ptr().to_vec(),
                col_idx: a.col_idx().to_vec(),
                lu,
            });
        }
        Ok(self.cache.as_ref().expect("cache populated").lu.clone())
    }

    /// Solves `A x = b` for a square matrix, refining until the relative
    /// residual meets the tolerance.
    pub fn solve_matrix(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = a.n_rows();
        assert_eq!(a.n_cols(), n, "matrix must be square");
        assert_eq!(b.len(), n, "right-hand side length");
        let b_norm = norm(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let symbolic = self.symbolic(a)?;
        let view = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
        let lu = Lu::try_new_with_symbolic(symbolic, SparseColMatRef::new(view, a.values())).map_err(|e| match e {
            LuError::SymbolicSingular { index } => SolverError::Singular { pivot: index },
            LuError::Generic(g) => SolverError::Factorization(format!("{g:?}")),
        })?;
        let solve = |rhs: &mut [f64]| lu.solve_transpose_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));

        let mut x = b.to_vec();
        solve(&mut x);
        let mut rel = f64::INFINITY;
        for _ in 0..=MAX_REFINEMENTS {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SolverError::Factorization("factorization produced non-finite values".into()));
            }
            let ax = a.mul_vec(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm(&r) / b_norm;
            if rel <= self.tol {
                return Ok(x);
            }
            solve(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
        }
        Err(SolverError::LinearResidual { residual: rel, tol: self.tol })
    }

    pub fn solve(&mut self, system: &ConstrainedSystem) -> Result<Vec<f64>, SolverError> {
        self.solve_matrix(&system.matrix, &system.rhs)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One-shot solve of a constrained system.
pub fn linear_solve(system: &ConstrainedSystem, tol: f64) -> Result<Vec<f64>, SolverError> {
    LinearSolver::new(tol).solve(system)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let a = SparseMatrix::identity(4);
        let b = [1.0, -2.0, 3.5, 0.25];
        assert_eq!(LinearSolver::new(1e-12).solve_matrix(&a, &b).unwrap(), b.to_vec());
    }

    #[test]
    fn nonsymmetric_system() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 2, 1.0), (1, 0, -1.0), (1, 1, 3.0), (2, 1, 4.0), (2, 2, 1.0)],
        )
        .unwrap();
        let x = [1.0, 2.0, -1.0];
        let b = a.mul_vec(&x);
        let mut s = LinearSolver::new(1e-14);
        let got = s.solve_matrix(&a, &b).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-14);
        }
        // Second solve reuses the cached symbolic factorization.
        let got = s.solve_matrix(&a, &a.mul_vec(&[0.0, 1.0, 0.0])).unwrap();
        assert!((got[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn structurally_singular_matrix_is_reported() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let err = LinearSolver::new(1e-12).solve_matrix(&a, &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, SolverError::Singular { .. } | SolverError::Factorization(_)), "{err}");
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = SparseMatrix::identity(3);
        assert_eq!(linear_solve_matrix_zero(&a), vec![0.0; 3]);
    }

    fn linear_solve_matrix_zero(a: &SparseMatrix) -> Vec<f64> {
        LinearSolver::new(1e-10).solve_matrix(a, &[0.0; 3]).unwrap()
    }
}
