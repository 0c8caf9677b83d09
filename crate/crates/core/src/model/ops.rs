//! Slice-level dense kernels for the model forward/backward passes.
//! All matrices are row-major.

/// `c = op(a) · op(b) + beta · c` where `op(a): m×k`, `op(b): k×n`.
/// A transposed operand is stored in its untransposed row-major layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the assertion above keeps every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out = a · b` with `a: n×k`, `b: k×m`.
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    out[..n * m].iter_mut().for_each(|x| *x = 0.0);
    for i in 0..n {
        let o = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (x, &bv) in o.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *x += aip * bv;
            }
        }
    }
}

/// `out += aᵀ · g` with `a: n×k`, `g: n×m`, `out: k×m`.
pub(crate) fn matmul_tn_acc(a: &[f64], g: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (x, &gv) in out[p * m..(p + 1) * m].iter_mut().zip(grow) {
                *x += aip * gv;
            }
        }
    }
}

/// `out += g · bᵀ` with `g: n×m`, `b: k×m`, `out: n×k`.
pub(crate) fn matmul_nt_acc(g: &[f64], b: &[f64], n: usize, m: usize, k: usize, out: &mut [f64]) {
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for p in 0..k {
            out[i * k + p] += dot(grow, &b[p * m..(p + 1) * m]);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators; fixed order keeps results reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) const LN_EPS: f64 = 1e-5;

/// Row-wise LayerNorm. Writes the normalized rows (before gain/bias) into
/// `normed`, `1/√(σ²+ε)` per row into `inv_std`, and the affine output into `out`.
pub(crate) fn layer_norm(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
    normed: &mut [f64],
    inv_std: &mut [f64],
    out: &mut [f64],
) {
    let d = gain.len();
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for j in 0..d {
            let n = (row[j] - mean) * is;
            normed[r * d + j] = n;
            out[r * d + j] = gain[j] * n + bias[j];
        }
    }
}

/// Backward of [`layer_norm`]: accumulates gain/bias grads and returns `dx`.
pub(crate) fn layer_norm_backward(
    dout: &[f64],
    normed: &[f64],
    inv_std: &[f64],
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
    dx: &mut [f64],
) {
    let d = gain.len();
    let mut dn = vec![0.0; d];
    for (r, drow) in dout.chunks_exact(d).enumerate() {
        let nrow = &normed[r * d..(r + 1) * d];
        for j in 0..d {
            dgain[j] += drow[j] * nrow[j];
            dbias[j] += drow[j];
            dn[j] = drow[j] * gain[j];
        }
        let mean_dn = dn.iter().sum::<f64>() / d as f64;
        let mean_dn_n = dn.iter().zip(nrow).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[r * d + j] = inv_std[r] * (dn[j] - mean_dn - nrow[j] * mean_dn_n);
        }
    }
}
