//! Numerical laboratory for non-self-adjoint Schrödinger and Dirac operators on periodic
//! grids, built around the Birman–Schwinger operator.

pub mod birman_schwinger;
pub mod certlab;
pub mod conformal;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod linalg;
pub mod resolvent;
pub mod spectra;
pub mod symbols;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
