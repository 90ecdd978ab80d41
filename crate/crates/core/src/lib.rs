//! Structured robust shape-matrix estimation for complex elliptical models.

pub mod baselines;
pub mod bench;
pub mod coca;
pub mod crb;
pub mod error;
pub mod hermitian;
pub mod io;
pub mod sampling;
pub mod structures;

pub use error::{Error, Result};
