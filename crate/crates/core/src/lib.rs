//! Linear hyperspectral unmixing.
//!
//! The observed cube `Y` (bands x pixels) is modelled as `Y = E A + N` with
//! endmember spectra `E` and fractional abundances `A`. The crate covers
//! supervised inversion with known or extracted endmembers, sparse
//! regression against a spectral library, blind factorizations, and the
//! synthetic benchmark and metrics used to compare them.

pub mod blind;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod extract;
pub mod fixtures;
pub mod geometry;
pub mod io;
mod lsq;
pub mod rng;
pub mod simplex;
pub mod sparse;
pub mod subspace;
pub mod supervised;
pub mod types;

pub use error::{Result, UnmixError};
pub use types::{AbundanceMap, Diagnostics, EndmemberMatrix, HsiCube, SolverOptions};
