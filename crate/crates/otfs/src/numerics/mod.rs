//! Dense complex matrices, unitary transforms, kernels and the handful of
//! factorizations the modems need.

mod linalg;
mod matrix;
mod transform;

pub use linalg::{
    hermitian_eig, null_space_basis, regularized_lmmse, unvectorize, vectorize, EigenFactors,
};
pub use matrix::ComplexMatrix;
pub use transform::{
    dft_in_place, dirichlet_kernel, exp_sum, isft, sft, unitary_dft_matrix,
};
