use crate::error::{Error, Result};
use crate::Scalar;

use super::Matrix;

/// Quintic Newton–Schulz coefficients `(a, b, c)`.
pub const NS_COEFFS: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);
pub const NS_DEFAULT_ITERS: usize = 5;

/// Approximate orthogonalization of `m` by the quintic Newton–Schulz iteration
///
/// ```text
/// X₀ = M / ‖M‖_F
/// Xₖ₊₁ = a·Xₖ + b·(XₖXₖᵀ)Xₖ + c·(XₖXₖᵀ)²Xₖ
/// ```
///
/// Tall inputs are transposed first so the Gram matrix is formed on the
/// smaller side. The coefficients push every singular value into a band
/// around one rather than converging to it exactly.
pub fn newton_schulz<T: Scalar>(m: &Matrix<T>, iters: usize) -> Result<Matrix<T>> {
    if iters == 0 {
        return Err(Error::InvalidConfig("newton_schulz needs iters >= 1".into()));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("newton_schulz input".into()));
    }
    if m.is_all_zero() {
        return Err(Error::ZeroMatrix);
    }
    let tall = m.rows() > m.cols();
    let x0 = if tall { m.transpose() } else { m.clone() };
    let norm = x0.frobenius_norm();
    let mut x = x0.scale(T::one() / norm);

    let (a, b, c) = (
        T::lit(NS_COEFFS.0),
        T::lit(NS_COEFFS.1),
        T::lit(NS_COEFFS.2),
    );
    for _ in 0..iters {
        let gram = x.matmul(&x.transpose())?;
        let gram2 = gram.matmul(&gram)?;
        let poly = Matrix::from_raw(
            gram.rows(),
            gram.cols(),
            gram.as_slice()
                .iter()
                .zip(gram2.as_slice())
                .map(|(&g1, &g2)| b * g1 + c * g2)
                .collect(),
        );
        let px = poly.matmul(&x)?;
        x = Matrix::from_raw(
            x.rows(),
            x.cols(),
            x.as_slice()
                .iter()
                .zip(px.as_slice())
                .map(|(&xi, &pi)| a * xi + pi)
                .collect(),
        );
        if !x.is_finite() {
            return Err(Error::NonFinite("newton_schulz iterate".into()));
        }
    }
    Ok(if tall { x.transpose() } else { x })
}
