use thiserror::Error;

use crate::assembly::SolveError;
use crate::basis::BasisError;
use crate::benchmarks::ProblemError;
use crate::mesh::MeshError;
use crate::quadrature::QuadratureError;
use crate::vem::VemError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Vem(#[from] VemError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}
