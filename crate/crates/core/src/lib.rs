//! Numerical laboratory for the weighted positive definiteness of the 3D
//! Lamé operator `Lu = -Δu - α grad div u` with its own fundamental matrix as
//! weight, and for the Wiener-type regularity test built on top of it.
//!
//! Module map:
//!
//! * [`elastic`]: Lamé operator, fundamental matrix and its divergence.
//! * [`field`]: compactly supported test fields with analytic derivatives.
//! * [`quadrature`]: sphere and polar volume rules.
//! * [`split`]: spherical-mean decomposition `u = ū + v` and its checks.
//! * [`region`]: the B₊/B₋ quadratic forms, their minors and the roots
//!   bounding the positivity window.
//! * [`form`]: direct evaluation of the weighted form and its identities.
//! * [`voxel`]: voxel lattices, domains and the `voxdom v1` format.
//! * [`capacity`]: discrete harmonic capacity and dyadic Wiener profiles.
//! * [`probe`]: finite-difference Lamé Dirichlet solver and decay profiles.
//! * [`fixtures`]: analytic test domains (half-space, cone, spike, point).

pub mod capacity;
pub mod elastic;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod form;
pub mod linalg;
pub mod probe;
pub mod quadrature;
pub mod region;
pub mod split;
pub mod voxel;

pub use error::{LabError, Result};
