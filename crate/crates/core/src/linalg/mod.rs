//! Dense linear algebra: matrices, spectral norms, exact singular values and 2-D DFTs.

mod dft;
mod matrix;
mod power;
mod svd;

pub use dft::{dft2, idft2, ComplexMatrix};
pub(crate) use matrix::{gemm, GemmOperand};
pub use matrix::{axpy, distance2, dot, norm2, Matrix};
pub use power::{
    spectral_norm_operator, spectral_norm_power, LinearOperator, PowerIterConfig,
    SpectralEstimate,
};
pub use svd::{
    complex_singular_values, singular_values_exact, singular_values_exact_with_limit,
    EXACT_SVD_LIMIT,
};
