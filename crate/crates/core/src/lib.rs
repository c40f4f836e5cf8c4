pub mod control;
pub mod device;
pub mod error;
pub mod gradient;
pub mod hamiltonian;
mod chebyshev;
pub mod optimizer;
pub mod qcore;
pub mod stateprep;
pub mod tomography;

pub use error::{Error, Result};
