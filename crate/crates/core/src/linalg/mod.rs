//! Dense matrix kernels, a one-sided Jacobi SVD used as a verification
//! oracle, and the Newton–Schulz orthogonalization used by Muon.

mod matrix;
mod newton_schulz;
mod svd;

pub use matrix::{frobenius_norm, matmul, Matrix};
pub use newton_schulz::{newton_schulz, NS_COEFFS, NS_DEFAULT_ITERS};
pub use svd::{ortho_oracle, svd, SvdResult, SVD_MAX_DIM, SVD_SWEEP_BUDGET};
