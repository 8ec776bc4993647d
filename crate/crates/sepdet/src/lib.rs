//! Fredholm determinants of semi-separable integral kernels via the Jost–Pais
//! reduction, with a dense Nyström oracle, matrix Schrödinger Jost functions and
//! supersymmetric index / spectral-shift computations.

pub mod error;
pub mod grid;
pub mod matcore;
pub mod nystrom;
pub mod ode;
pub mod par;
pub mod random_kernels;
pub mod schrodinger;
pub mod semisep;
pub mod susy_index;
pub mod volterra;

pub use error::{Error, Result};
