//! Finite-element solver for the 2D incompressible Navier–Stokes equations.
//!
//! The convection term uses the energy–momentum–angular-momentum conserving
//! (EMAC) trilinear form, discretized with Taylor–Hood P2/P1 elements on
//! triangles. Time stepping is backward Euler followed by a linear three-level
//! time filter that raises the temporal order from one to two.
//!
//! Module layout:
//! - [`mesh`]: triangulations, boundary markers, ASCII MSH 2.2 I/O
//! - [`spaces`]: P2/P1 DOF maps, quadrature, interpolation, point evaluation
//! - [`assembly`]: sparse operators, EMAC residual/Jacobian, Dirichlet constraints
//! - [`solver`]: Newton solve of the backward Euler step, the time filter, history
//! - [`diagnostics`]: energy, momentum, angular momentum, G/F norms, drag and lift
//! - [`benchmarks`]: manufactured solution, Gresho vortex, cylinder channel, error norms

pub mod assembly;
pub mod benchmarks;
pub mod diagnostics;
pub mod mesh;
pub mod solver;
pub mod spaces;

mod error;

pub use error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];
