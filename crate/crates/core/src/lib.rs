//! Mixed virtual element discretization of anisotropic diffusion problems on
//! polygonal meshes.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: polygonal meshes, element geometry, generators and a plain-text format.
//! * [`quadrature`]: Gauss rules on `[0, 1]` and fan-triangulated polygon rules.
//! * [`basis`]: scaled monomials, `L²`-orthonormal scalar bases (2D and 1D) and
//!   the gradient / complement vector bases.
//! * [`vem`]: per-element degrees of freedom, the `L²` vector projector and the
//!   local consistency, stabilization, divergence and saddle matrices.
//! * [`assembly`]: global numbering, boundary conditions, the global saddle
//!   system, the sparse direct solve and condition numbers.
//! * [`benchmarks`]: the three test problems, error norms and convergence sweeps.
//! * [`cli`]: configuration parsing and CSV/JSON reports.

pub mod assembly;
pub mod basis;
pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod mesh;
pub mod quadrature;
pub mod vem;

pub use error::{Error, Result};

/// Points and vectors in the plane.
pub type Point = nalgebra::Vector2<f64>;

/// Number of scalar polynomials of total degree at most `k` in two variables.
pub const fn poly_dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Dimension of the gradient space `∇P_{k+1}` inside `[P_k]²`.
pub const fn grad_dim(k: usize) -> usize {
    poly_dim(k) + k + 1
}

/// Dimension of the complement of `∇P_{k+1}` inside `[P_k]²`.
pub const fn perp_dim(k: usize) -> usize {
    poly_dim(k) - (k + 1)
}
