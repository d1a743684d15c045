//! Correlated-qubit-channel simulator with a spin-1/2 XY chain as the
//! memory environment.
//!
//! The channel acts on n qubits that couple locally to an open XY chain in
//! a transverse field. Conditional chain Hamiltonians are mapped to free
//! fermions, and every channel quantity is built from generalized Loschmidt
//! echoes evaluated as determinants of 2L x 2L single-particle matrices. A
//! dense many-body oracle validates the whole pipeline at small sizes.
//!
//! Crate layout follows the pipeline: [`model`] owns the configuration and
//! geometry, [`freefermion`] the quadratic forms and correlation matrices,
//! [`echo`] the determinant echoes, [`channel`] fidelity/purity/entropy and
//! bounds, [`oracle`] the exact-diagonalization reference, [`analysis`] the
//! decay-rate and criticality extraction, and [`cli`] the command-line
//! front end.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod echo;
pub mod error;
pub mod freefermion;
#[cfg(test)]
mod grassmann_lab;
mod linalg;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use num_complex::Complex64;
