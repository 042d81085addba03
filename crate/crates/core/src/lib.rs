//! Numerical laboratory for the Lamb-Chaplygin dipole.

pub mod cli;
pub mod dipole;
pub mod error;
pub mod evolve;
pub(crate) mod fft2;
pub mod field;
pub mod modulation;
pub mod quad;
pub mod spectral;
pub mod specfun;

pub use error::{LabError, Result};
