//! Gaussian free fields on the discrete torus and on `Z^d`.
//!
//! The crate provides the Green functions of simple random walk on both
//! graphs, samplers for the corresponding free fields, a coupling of the
//! torus field with the `Z^d` field on a macroscopic box, and level-set
//! percolation statistics.

pub mod coupling;
pub mod error;
pub mod fft;
pub mod gff;
pub mod green;
pub mod lattice;
pub mod percolation;
pub mod quad;
pub mod seed;

pub use error::{Error, Result};
