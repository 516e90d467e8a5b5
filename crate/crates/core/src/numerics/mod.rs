//! Dense linear algebra, special functions and seeded sampling.

mod activation;
mod eigen;
mod matrix;
mod rng;
mod special;

pub use activation::{activation, sigmoid, Activation};
pub use eigen::eig_sym;
pub use matrix::{dot, mat_mul, Matrix};
pub use rng::{sample_gaussian, sample_poisson, RngState};
pub use special::{log_factorial, log_gamma, normal_sf};
