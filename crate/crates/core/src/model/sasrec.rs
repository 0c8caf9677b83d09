//! Single-block, single-head causal self-attention recommender.
//!
//! ```text
//! x  = E[item] + P[pos]
//! h1 = LN1(x + softmax_causal(QKᵀ/√d)·V·W_O)
//! h2 = LN2(h1 + relu(h1·W_1 + b_1)·W_2 + b_2)
//! ```

use crate::error::Result;

use super::ops::{self, LN_EPS};
use super::{find, Batch, Grads, ModelSpec, ParamTensor};

struct Idx {
    e: usize,
    p: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    g1: usize,
    c1: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    g2: usize,
    c2: usize,
}

impl Idx {
    fn resolve(params: &[ParamTensor<f64>]) -> Result<Self> {
        Ok(Self {
            e: find(params, "E")?,
            p: find(params, "P")?,
            wq: find(params, "W_Q")?,
            wk: find(params, "W_K")?,
            wv: find(params, "W_V")?,
            wo: find(params, "W_O")?,
            g1: find(params, "ln1.gain")?,
            c1: find(params, "ln1.bias")?,
            w1: find(params, "W_1")?,
            b1: find(params, "b_1")?,
            w2: find(params, "W_2")?,
            b2: find(params, "b_2")?,
            g2: find(params, "ln2.gain")?,
            c2: find(params, "ln2.bias")?,
        })
    }
}

pub(crate) struct Cache {
    idx: Idx,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>,
    ctx: Vec<f64>,
    n1: Vec<f64>,
    is1: Vec<f64>,
    h1: Vec<f64>,
    z: Vec<f64>,
    a: Vec<f64>,
    n2: Vec<f64>,
    is2: Vec<f64>,
}

pub(crate) fn forward(
    params: &[ParamTensor<f64>],
    spec: &ModelSpec,
    batch: &Batch,
) -> Result<(Vec<f64>, Cache)> {
    let idx = Idx::resolve(params)?;
    let val = |i: usize| params[i].value.as_slice();
    let (b, l, d, f) = (batch.batch_size, batch.max_len, spec.embed_dim, spec.ffn_dim);
    let n = b * l;

    let mut x = vec![0.0; n * d];
    for r in 0..b {
        for t in 0..l {
            let id = batch.inputs[r * l + t];
            let row = &mut x[(r * l + t) * d..(r * l + t + 1) * d];
            let e = &val(idx.e)[id * d..(id + 1) * d];
            let p = &val(idx.p)[t * d..(t + 1) * d];
            for j in 0..d {
                row[j] = e[j] + p[j];
            }
        }
    }

    let mut q = vec![0.0; n * d];
    let mut k = vec![0.0; n * d];
    let mut v = vec![0.0; n * d];
    ops::matmul(&x, val(idx.wq), n, d, d, &mut q);
    ops::matmul(&x, val(idx.wk), n, d, d, &mut k);
    ops::matmul(&x, val(idx.wv), n, d, d, &mut v);

    let scale = 1.0 / (d as f64).sqrt();
    let mut att = vec![0.0; b * l * l];
    let mut ctx = vec![0.0; n * d];
    for r in 0..b {
        let valid = |t: usize| batch.inputs[r * l + t] != 0;
        for t in 0..l {
            if !valid(t) {
                continue;
            }
            let qt = &q[(r * l + t) * d..(r * l + t + 1) * d];
            let arow = &mut att[(r * l + t) * l..(r * l + t + 1) * l];
            let mut max = f64::NEG_INFINITY;
            for j in 0..=t {
                if valid(j) {
                    let s = ops::dot(qt, &k[(r * l + j) * d..(r * l + j + 1) * d]) * scale;
                    arow[j] = s;
                    max = max.max(s);
                }
            }
            let mut sum = 0.0;
            for j in 0..=t {
                if valid(j) {
                    arow[j] = (arow[j] - max).exp();
                    sum += arow[j];
                }
            }
            let c = &mut ctx[(r * l + t) * d..(r * l + t + 1) * d];
            for j in 0..=t {
                if valid(j) {
                    arow[j] /= sum;
                    ops::axpy(arow[j], &v[(r * l + j) * d..(r * l + j + 1) * d], c);
                }
            }
        }
    }

    let mut r1 = vec![0.0; n * d];
    ops::matmul(&ctx, val(idx.wo), n, d, d, &mut r1);
    r1.iter_mut().zip(&x).for_each(|(o, xi)| *o += xi);
    let mut n1 = vec![0.0; n * d];
    let mut is1 = vec![0.0; n];
    let mut h1 = vec![0.0; n * d];
    ops::layer_norm(&r1, val(idx.g1), val(idx.c1), LN_EPS, &mut n1, &mut is1, &mut h1);

    let mut z = vec![0.0; n * f];
    ops::matmul(&h1, val(idx.w1), n, d, f, &mut z);
    for row in z.chunks_exact_mut(f) {
        row.iter_mut().zip(val(idx.b1)).for_each(|(zi, bi)| *zi += bi);
    }
    let a: Vec<f64> = z.iter().map(|&zi| zi.max(0.0)).collect();
    let mut r2 = vec![0.0; n * d];
    ops::matmul(&a, val(idx.w2), n, f, d, &mut r2);
    for (row, hrow) in r2.chunks_exact_mut(d).zip(h1.chunks_exact(d)) {
        for j in 0..d {
            row[j] += val(idx.b2)[j] + hrow[j];
        }
    }
    let mut n2 = vec![0.0; n * d];
    let mut is2 = vec![0.0; n];
    let mut h2 = vec![0.0; n * d];
    ops::layer_norm(&r2, val(idx.g2), val(idx.c2), LN_EPS, &mut n2, &mut is2, &mut h2);

    let cache = Cache {
        idx,
        x,
        q,
        k,
        v,
        att,
        ctx,
        n1,
        is1,
        h1,
        z,
        a,
        n2,
        is2,
    };
    Ok((h2, cache))
}

pub(crate) fn backward(
    params: &[ParamTensor<f64>],
    spec: &ModelSpec,
    batch: &Batch,
    cache: &Cache,
    dh2: &[f64],
    grads: &mut Grads,
) {
    let c = cache;
    let idx = &c.idx;
    let val = |i: usize| params[i].value.as_slice();
    let (b, l, d, f) = (batch.batch_size, batch.max_len, spec.embed_dim, spec.ffn_dim);
    let n = b * l;

    let mut dr2 = vec![0.0; n * d];
    {
        let (dg, dc) = grads.pair(idx.g2, idx.c2);
        ops::layer_norm_backward(dh2, &c.n2, &c.is2, val(idx.g2), dg, dc, &mut dr2);
    }

    let mut dh1 = dr2.clone();
    for row in dr2.chunks_exact(d) {
        ops::axpy(1.0, row, grads.get(idx.b2));
    }
    ops::matmul_tn_acc(&c.a, &dr2, n, f, d, grads.get(idx.w2));
    let mut dz = vec![0.0; n * f];
    ops::matmul_nt_acc(&dr2, val(idx.w2), n, d, f, &mut dz);
    dz.iter_mut().zip(&c.z).for_each(|(g, &zi)| {
        if zi <= 0.0 {
            *g = 0.0
        }
    });
    for row in dz.chunks_exact(f) {
        ops::axpy(1.0, row, grads.get(idx.b1));
    }
    ops::matmul_tn_acc(&c.h1, &dz, n, d, f, grads.get(idx.w1));
    ops::matmul_nt_acc(&dz, val(idx.w1), n, f, d, &mut dh1);

    let mut dr1 = vec![0.0; n * d];
    {
        let (dg, dc) = grads.pair(idx.g1, idx.c1);
        ops::layer_norm_backward(&dh1, &c.n1, &c.is1, val(idx.g1), dg, dc, &mut dr1);
    }

    let mut dx = dr1.clone();
    ops::matmul_tn_acc(&c.ctx, &dr1, n, d, d, grads.get(idx.wo));
    let mut dctx = vec![0.0; n * d];
    ops::matmul_nt_acc(&dr1, val(idx.wo), n, d, d, &mut dctx);

    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = vec![0.0; n * d];
    let mut dk = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut da = vec![0.0; l];
    for r in 0..b {
        for t in 0..l {
            if batch.inputs[r * l + t] == 0 {
                continue;
            }
            let arow = &c.att[(r * l + t) * l..(r * l + t + 1) * l];
            let dct = &dctx[(r * l + t) * d..(r * l + t + 1) * d];
            let mut weighted = 0.0;
            for j in 0..=t {
                if arow[j] == 0.0 {
                    da[j] = 0.0;
                    continue;
                }
                let vj = (r * l + j) * d;
                da[j] = ops::dot(dct, &c.v[vj..vj + d]);
                weighted += arow[j] * da[j];
                ops::axpy(arow[j], dct, &mut dv[vj..vj + d]);
            }
            let qt = (r * l + t) * d;
            for j in 0..=t {
                if arow[j] == 0.0 {
                    continue;
                }
                let ds = arow[j] * (da[j] - weighted) * scale;
                let kj = (r * l + j) * d;
                let (kslice, qslice) = (&c.k[kj..kj + d], &c.q[qt..qt + d]);
                ops::axpy(ds, kslice, &mut dq[qt..qt + d]);
                ops::axpy(ds, qslice, &mut dk[kj..kj + d]);
            }
        }
    }

    ops::matmul_tn_acc(&c.x, &dq, n, d, d, grads.get(idx.wq));
    ops::matmul_tn_acc(&c.x, &dk, n, d, d, grads.get(idx.wk));
    ops::matmul_tn_acc(&c.x, &dv, n, d, d, grads.get(idx.wv));
    ops::matmul_nt_acc(&dq, val(idx.wq), n, d, d, &mut dx);
    ops::matmul_nt_acc(&dk, val(idx.wk), n, d, d, &mut dx);
    ops::matmul_nt_acc(&dv, val(idx.wv), n, d, d, &mut dx);

    for r in 0..b {
        for t in 0..l {
            let id = batch.inputs[r * l + t];
            let row = &dx[(r * l + t) * d..(r * l + t + 1) * d];
            ops::axpy(1.0, row, &mut grads.get(idx.p)[t * d..(t + 1) * d]);
            if id != 0 {
                ops::axpy(1.0, row, &mut grads.get(idx.e)[id * d..(id + 1) * d]);
            }
        }
    }
}
