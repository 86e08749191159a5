pub mod analysis;
pub mod cli;
pub mod classical;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod potential;

pub use error::{Error, Result};
