//! Generalized Katz-Lebowitz-Spohn exclusion process.
//!
//! - [`model`]: parameters, configurations and jump/reservoir rates.
//! - [`ising`]: transfer-matrix evaluation of the invariant Ising measure and the exact current.
//! - [`generator`]: full intensity matrices for small lattices, stationary laws and invariance certificates.
//! - [`sim`]: continuous-time Monte Carlo for large lattices.
//! - [`phase`]: current-density curves and the extremal-current phase diagram.

pub mod error;
pub mod exec;
pub mod generator;
pub mod ising;
pub mod model;
pub mod phase;
pub mod sim;

pub use error::{GklsError, Result};
pub use exec::Exec;
