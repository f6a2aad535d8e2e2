//! Thermodynamic formalism on mixing subshifts of finite type.
//!
//! The crate builds equilibrium states of finite-range potentials through the
//! transfer operator, constructs the family of leafwise measures on local
//! unstable sets, and runs the Marcus averaging operators whose uniform
//! convergence pins the equilibrium state down by its unstable conditionals.

pub mod config;
pub mod error;
pub mod leafwise;
pub mod marcus;
pub mod potential;
pub mod report;
pub mod sft;
pub mod suspension;
pub mod transfer;

pub use error::{Error, Result};
