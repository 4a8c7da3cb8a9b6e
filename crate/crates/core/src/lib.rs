//! Numerical engine for a Landau electron in a rotating magnetic field with an
//! axial confining potential.
//!
//! The crate builds every operator of the factorized time evolution
//! `U = R g U₁d U₂d U_ξ g⁻¹(0)` in a truncated Fock space and checks the
//! factorization against brute-force propagation.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod geometry;
pub mod hamiltonians;
pub mod hilbert;
pub mod linalg;
pub mod propagators;
