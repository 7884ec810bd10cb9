//! Dense linear algebra and seedable, splittable random number generation.

pub mod linalg;
pub mod matrix;
pub mod rng;

pub use matrix::Matrix;
pub use rng::RngState;
