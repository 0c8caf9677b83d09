use crate::error::{Error, Result};
use crate::Scalar;

use super::Matrix;

/// Largest dimension accepted by [`svd`]. The oracle is for tests and small parameters.
pub const SVD_MAX_DIM: usize = 512;
/// Maximum number of Jacobi sweeps before [`svd`] gives up.
pub const SVD_SWEEP_BUDGET: usize = 60;

/// Thin SVD `m = u · diag(sigma) · vt` with `r = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdResult<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub vt: Matrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let us = Matrix::from_fn(self.u.rows(), self.u.cols(), |i, j| {
            self.u[(i, j)] * self.sigma[j]
        });
        us.matmul(&self.vt).expect("svd factors are conformant")
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of the working copy are rotated pairwise until every pair is
/// orthogonal to relative tolerance `1e-14`; the column norms are then the
/// singular values. Wide inputs are handled through their transpose.
pub fn svd<T: Scalar>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    let (rows, cols) = m.shape();
    if rows > SVD_MAX_DIM || cols > SVD_MAX_DIM {
        return Err(Error::TooLarge {
            rows,
            cols,
            limit: SVD_MAX_DIM,
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    if rows < cols {
        let t = svd_tall(&m.transpose())?;
        return Ok(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        });
    }
    svd_tall(m)
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn svd_tall<T: Scalar>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    let (rows, n) = m.shape();
    // Columns of the working matrix and of V, each stored contiguously.
    let mut w = m.transpose().into_vec();
    let mut v = Matrix::<T>::identity(n).into_vec();

    let tol = T::lit(1e-14).max(T::epsilon() * T::lit(8.0));
    let norm = m.frobenius_norm();
    let floor = (tol * norm) * (tol * norm);

    let mut converged = false;
    for _ in 0..SVD_SWEEP_BUDGET {
        let mut rotations = 0usize;
        for p in 0..n {
            for q in (p + 1)..n {
                let (wp, wq) = (&w[p * rows..(p + 1) * rows], &w[q * rows..(q + 1) * rows]);
                let alpha = dot(wp, wp);
                let beta = dot(wq, wq);
                let gamma = dot(wp, wq);
                let scale = (alpha * beta).sqrt();
                if scale <= floor || gamma.abs() <= tol * scale {
                    continue;
                }
                rotations += 1;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, rows, p, q, c, s);
                rotate(&mut v, n, p, q, c, s);
            }
        }
        if rotations == 0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            budget: SVD_SWEEP_BUDGET,
        });
    }

    let norms: Vec<T> = (0..n)
        .map(|j| dot(&w[j * rows..(j + 1) * rows], &w[j * rows..(j + 1) * rows]).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let sigma_max = norms[order[0]];
    let cutoff = sigma_max * T::lit(1e-10);
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut vt = Vec::with_capacity(n * n);
    for &j in &order {
        let s = norms[j];
        let col = &w[j * rows..(j + 1) * rows];
        let u = if s > cutoff && s > T::zero() {
            col.iter().map(|&x| x / s).collect()
        } else {
            complete_basis(&u_cols, rows)
        };
        u_cols.push(u);
        sigma.push(s);
        vt.extend_from_slice(&v[j * n..(j + 1) * n]);
    }

    let u = Matrix::from_fn(rows, n, |i, j| u_cols[j][i]);
    Ok(SvdResult {
        u,
        sigma,
        vt: Matrix::from_raw(n, n, vt),
    })
}

fn rotate<T: Scalar>(buf: &mut [T], len: usize, p: usize, q: usize, c: T, s: T) {
    let (head, tail) = buf.split_at_mut(q * len);
    let xp = &mut head[p * len..(p + 1) * len];
    let xq = &mut tail[..len];
    for (a, b) in xp.iter_mut().zip(xq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Unit vector orthogonal to `basis`, built by Gram–Schmidt on the standard basis.
fn complete_basis<T: Scalar>(basis: &[Vec<T>], len: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for k in 0..len {
        let mut e = vec![T::zero(); len];
        e[k] = T::one();
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&e, b);
                for (x, &y) in e.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let norm = dot(&e, &e).sqrt();
        if norm > T::lit(0.5) {
            return e.into_iter().map(|x| x / norm).collect();
        }
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, e));
        }
    }
    let (norm, e) = best.expect("len > 0");
    e.into_iter().map(|x| x / norm).collect()
}

/// Nearest semi-orthogonal matrix `U Vᵀ`, computed from the SVD.
///
/// Singular directions with `σ ≤ 1e-12 · σ_max` are dropped, so rank-deficient
/// inputs map to a partial isometry on the span of the retained directions.
pub fn ortho_oracle<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    if m.is_all_zero() {
        return Err(Error::ZeroMatrix);
    }
    let d = svd(m)?;
    let cutoff = d.sigma[0] * T::lit(1e-12);
    let keep = d.sigma.iter().take_while(|&&s| s > cutoff).count();
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(rows, cols);
    for k in 0..keep {
        for i in 0..rows {
            let uik = d.u[(i, k)];
            for j in 0..cols {
                out[(i, j)] += uik * d.vt[(k, j)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, r: usize, c: usize) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn orthonormal_err(q: &Matrix<f64>) -> f64 {
        let g = q.transpose().matmul(q).unwrap();
        g.sub(&Matrix::identity(g.rows())).unwrap().frobenius_norm()
    }

    fn check_invariants(m: &Matrix<f64>) {
        let d = svd(m).unwrap();
        let r = m.rows().min(m.cols());
        assert_eq!(d.sigma.len(), r);
        assert!(d.sigma.windows(2).all(|w| w[0] >= w[1]));
        assert!(d.sigma.iter().all(|&s| s >= 0.0));
        assert!(orthonormal_err(&d.u) < 1e-10);
        assert!(orthonormal_err(&d.vt.transpose()) < 1e-10);
        let rel = d.reconstruct().sub(m).unwrap().frobenius_norm() / m.frobenius_norm().max(1e-300);
        assert!(rel < 1e-8, "reconstruction {rel}");
    }

    #[test]
    fn diagonal_input() {
        let m = Matrix::<f64>::diag(&[3.0, 1.0]);
        let d = svd(&m).unwrap();
        assert_eq!(d.sigma, vec![3.0, 1.0]);
        for i in 0..2 {
            for j in 0..2 {
                let want: f64 = if i == j { 1.0 } else { 0.0 };
                assert!((d.u[(i, j)].abs() - want).abs() < 1e-14);
                assert!((d.vt[(i, j)].abs() - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let d = svd(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(d.sigma, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn random_shapes_satisfy_invariants() {
        for (seed, (r, c)) in [(6, 4), (4, 6), (1, 5), (5, 1), (9, 9), (30, 17)]
            .into_iter()
            .enumerate()
        {
            check_invariants(&random(seed as u64, r, c));
        }
    }

    #[test]
    fn rank_deficient_input_completes_basis() {
        let a = random(11, 6, 2);
        let b = random(12, 2, 4);
        let m = a.matmul(&b).unwrap();
        check_invariants(&m);
        check_invariants(&Matrix::zeros(3, 3));
    }

    #[test]
    fn deterministic() {
        let m = random(5, 8, 5);
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.vt, b.vt);
    }

    #[test]
    fn rejects_oversized_and_non_finite() {
        let big = Matrix::<f64>::zeros(513, 2);
        assert!(matches!(svd(&big), Err(Error::TooLarge { .. })));
        let mut m = Matrix::<f64>::zeros(2, 2);
        m[(0, 0)] = f64::INFINITY;
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn ortho_oracle_fixed_point_and_scaling() {
        // Rotation by 30 degrees.
        let (s, c) = (0.5f64, 3f64.sqrt() / 2.0);
        let q = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        let o = ortho_oracle(&q).unwrap();
        assert!(o.sub(&q).unwrap().frobenius_norm() < 1e-12);
        let o = ortho_oracle(&q.scale(7.5)).unwrap();
        assert!(o.sub(&q).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn ortho_oracle_rank_deficient_is_partial_isometry() {
        let a = random(21, 5, 1);
        let b = random(22, 1, 4);
        let o = ortho_oracle(&a.matmul(&b).unwrap()).unwrap();
        // Rank one: O Oᵀ O = O and ‖O‖_F = 1.
        let ooo = o.matmul(&o.transpose()).unwrap().matmul(&o).unwrap();
        assert!(ooo.sub(&o).unwrap().frobenius_norm() < 1e-10);
        assert!((o.frobenius_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ortho_oracle_rejects_zero() {
        assert!(matches!(
            ortho_oracle(&Matrix::<f64>::zeros(2, 3)),
            Err(Error::ZeroMatrix)
        ));
    }
}
