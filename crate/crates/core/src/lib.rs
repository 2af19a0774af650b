//! Numerical core for boson-sampling proof of work.

pub mod binning;
pub mod combin;
pub mod economics;
pub mod error;
pub mod gbs;
pub mod linalg;
pub mod perm;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, EstimatorConfig, SignVector};
pub use num_complex::Complex64;
pub use perm::Permutation;
pub use sampler::{InputSpec, OccupationVector, OutputDistribution, StateSpace};
