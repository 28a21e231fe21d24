//! Joint recovery of a 2D image and the distribution of its projection
//! angles from unordered, noisy 1D tomographic projections.

pub mod baselines;
pub mod basis;
pub mod bessel;
pub mod em_solver;
pub mod error;
pub mod gan_solver;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod moments;
pub mod phantom;
pub mod projection;

pub use error::{Error, Result};
