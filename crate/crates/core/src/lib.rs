//! Finite element solver for the stochastic Landau–Lifshitz–Gilbert equation.
//!
//! The stochastic equation for the magnetization M is transformed pathwise by
//! a rotation process Z (M = Z m) into a random-coefficient PDE for m, which is
//! discretized by a linear tangent-plane P1 scheme with nodal renormalization.
//!
//! Module map:
//! - [`mesh`], [`fem`]: simplicial meshes and the P1 space;
//! - [`wiener`]: seeded Brownian paths with exact coarsening;
//! - [`rotation`]: the rotation process, its gradient and the functional F;
//! - [`scheme`]: the θ-linear tangent-plane time stepping;
//! - [`diagnostics`]: reconstruction of M, interpolant errors, weak residual;
//! - [`sparse`]: CSR matrices, ILU(0)-preconditioned GMRES, dense fallback.

// `!(x > 0.0)` checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod par;
pub mod rotation;
pub mod scheme;
pub mod sparse;
pub mod vtk;
pub mod wiener;

pub use error::{Error, Result};
pub use fem::{NodalField3, P1Space, Vec3};
pub use mesh::Mesh;
pub use rotation::{NoiseCoefficients, RotationField};
pub use scheme::SchemeParams;
pub use wiener::WienerPath;
