use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{newton_schulz, ortho_oracle, svd, Matrix, NS_DEFAULT_ITERS};

/// Shapes cycled through by [`ns_check`].
pub const NS_CHECK_SHAPES: [(usize, usize); 4] = [(4, 4), (16, 8), (8, 16), (64, 64)];
pub const NS_CHECK_MAX_COND: f64 = 10.0;

/// Worst cases over the suite. Errors are relative Frobenius distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsCheckReport {
    pub cases: usize,
    pub max_oracle_error: f64,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    pub max_scale_error: f64,
    pub max_sign_error: f64,
    pub max_transpose_error: f64,
}

fn rel(a: &Matrix<f64>, b: &Matrix<f64>) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm() / b.frobenius_norm())
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `U diag(s) Vᵀ` with random orthonormal factors and singular values
/// spanning exactly `[1, max_cond]`.
pub fn conditioned_matrix(rows: usize, cols: usize, max_cond: f64, rng: &mut ChaCha8Rng) -> Result<Matrix<f64>> {
    let k = rows.min(cols);
    let u = svd(&gaussian(rows, k, rng))?.u;
    let v = svd(&gaussian(cols, k, rng))?.u;
    let spread = Uniform::new_inclusive(1.0, max_cond);
    let mut s: Vec<f64> = (0..k).map(|_| spread.sample(rng)).collect();
    s[0] = max_cond;
    s[k - 1] = 1.0;
    u.matmul(&Matrix::diag(&s))?.matmul(&v.transpose())
}

/// Newton–Schulz against the SVD polar factor on `cases` seeded matrices,
/// plus the scale, sign and transpose symmetries.
pub fn ns_check(cases: usize, seed: u64) -> Result<NsCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = NsCheckReport {
        cases,
        max_oracle_error: 0.0,
        min_singular_value: f64::INFINITY,
        max_singular_value: 0.0,
        max_scale_error: 0.0,
        max_sign_error: 0.0,
        max_transpose_error: 0.0,
    };
    for i in 0..cases {
        let (r, c) = NS_CHECK_SHAPES[i % NS_CHECK_SHAPES.len()];
        let m = conditioned_matrix(r, c, NS_CHECK_MAX_COND, &mut rng)?;
        let o = newton_schulz(&m, NS_DEFAULT_ITERS)?;
        report.max_oracle_error = report.max_oracle_error.max(rel(&o, &ortho_oracle(&m)?)?);
        for s in svd(&o)?.sigma {
            report.min_singular_value = report.min_singular_value.min(s);
            report.max_singular_value = report.max_singular_value.max(s);
        }
        for scale in [1e-3, 1e3] {
            let scaled = newton_schulz(&m.scale(scale), NS_DEFAULT_ITERS)?;
            report.max_scale_error = report.max_scale_error.max(rel(&scaled, &o)?);
        }
        let neg = newton_schulz(&m.scale(-1.0), NS_DEFAULT_ITERS)?;
        report.max_sign_error = report.max_sign_error.max(rel(&neg.scale(-1.0), &o)?);
        let tr = newton_schulz(&m.transpose(), NS_DEFAULT_ITERS)?;
        report.max_transpose_error = report.max_transpose_error.max(rel(&tr.transpose(), &o)?);
    }
    Ok(report)
}
