//! Dense vector arithmetic, splittable seeded randomness and a central
//! finite-difference gradient checker.

mod fd;
pub mod linalg;
mod rng;

pub use fd::{fd_gradient, rel_err, DEFAULT_FD_STEP};
pub use rng::RngStream;
