//! Work fluctuations and thermodynamic constraints for finite-dimensional systems.

pub mod error;
pub mod fluctuation;
pub mod io;
pub mod kernel;
pub mod majorize;
pub mod quantum;
pub mod thermo;

pub use error::{Error, Result};
