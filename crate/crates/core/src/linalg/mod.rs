//! Minimal dense linear algebra: row-major matrices, products, the matrix
//! exponential, and seeded random generation.

mod expm;
mod matrix;
mod rng;

pub use expm::{expm, solve, PADE13_THETA};
pub use matrix::{axpy_slice, dot, matmul, matvec_batch, norm2, rel_err, Matrix, Scalar};
pub use rng::{gaussian_matrix, Rng};
