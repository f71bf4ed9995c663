//! Boundary element solvers for time-harmonic acoustic scattering by finite
//! periodic arrays: dense collocation, block-Toeplitz FFT (PBEM) and the
//! single-level periodic fast multipole method (FMPBEM), in full space and
//! above a reflecting plane.

pub mod assembly;
pub mod error;
pub mod fmm;
pub mod geometry;
pub mod kernels;
pub mod pipeline;
pub mod postproc;
pub mod scenes;
pub mod solver;
pub mod specfun;
pub mod structured;

pub use error::{Error, Result};
pub use nalgebra::Vector3;
pub use num_complex::Complex64;

/// Cartesian point or direction in metres.
pub type Vec3 = Vector3<f64>;
