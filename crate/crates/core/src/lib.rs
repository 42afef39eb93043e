//! Spherical conformal parameterization of closed genus-0 triangle meshes.
//!
//! The central routine maps a closed surface to the unit sphere by minimizing
//! the discrete conformal energy (Dirichlet energy minus image area) directly
//! in spherical coordinates with a Hessian-based trust-region iteration:
//! every step solves a pinned sparse Newton system and then minimizes the
//! quadratic model exactly over the two-dimensional subspace spanned by the
//! Newton and gradient directions inside the trust region. The rotation-
//! minimized distance between consecutive sphere configurations serves as
//! the stopping criterion, so convergence is unaffected by the rotational
//! null space of the problem.
//!
//! Around that core the crate provides mesh loading and validation (OFF and
//! OBJ), a punctured-harmonic initial map, folding detection and mean value
//! coordinate repair, quasiconformal distortion diagnostics, and landmark-
//! driven spherical registration with barycentric pullback.

pub mod energy;
pub mod error;
pub mod hbtr;
pub mod init;
pub mod mesh;
pub mod metrics;
pub mod postprocess;
pub mod registration;
pub mod sparse;
pub mod sphere;

pub use error::{Error, Result};
