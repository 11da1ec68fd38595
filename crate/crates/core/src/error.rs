use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::benchmarks::BenchmarkError;
use crate::diagnostics::DiagnosticsError;
use crate::mesh::MeshError;
use crate::solver::SolverError;
use crate::spaces::SpaceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
