//! Stochastic homotopy sampling of a constrained two-qubit control landscape
//! and detection of changes in the number of connected components of its
//! optimal level set.

pub mod error;
pub mod experiment;
pub mod io;
pub mod landscape;
pub mod lmc;
pub mod protocol;
pub mod quantum;

pub use error::{Error, Result};
