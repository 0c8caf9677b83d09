//! Mean-pooling MLP recommender: the running mean of the item embeddings
//! seen so far, followed by two ReLU layers. `MeanPool` stops at the mean.

use crate::error::Result;

use super::ops;
use super::{find, Batch, Grads, ModelKind, ModelSpec, ParamTensor};

struct Layers {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

struct Idx {
    e: usize,
    layers: Option<Layers>,
}

pub(crate) struct Cache {
    idx: Idx,
    count: Vec<usize>,
    h0: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
}

pub(crate) fn forward(
    params: &[ParamTensor<f64>],
    spec: &ModelSpec,
    batch: &Batch,
) -> Result<(Vec<f64>, Cache)> {
    let layers = match spec.kind {
        ModelKind::MeanPool => None,
        _ => Some(Layers {
            w1: find(params, "W_1")?,
            b1: find(params, "b_1")?,
            w2: find(params, "W_2")?,
            b2: find(params, "b_2")?,
        }),
    };
    let idx = Idx {
        e: find(params, "E")?,
        layers,
    };
    let val = |i: usize| params[i].value.as_slice();
    let (b, l, d) = (batch.batch_size, batch.max_len, spec.embed_dim);
    let n = b * l;

    let mut count = vec![0usize; n];
    let mut h0 = vec![0.0; n * d];
    let mut acc = vec![0.0; d];
    for r in 0..b {
        acc.iter_mut().for_each(|x| *x = 0.0);
        let mut c = 0usize;
        for t in 0..l {
            let id = batch.inputs[r * l + t];
            if id != 0 {
                ops::axpy(1.0, &val(idx.e)[id * d..(id + 1) * d], &mut acc);
                c += 1;
            }
            count[r * l + t] = c;
            if c > 0 {
                let inv = 1.0 / c as f64;
                for (o, &a) in h0[(r * l + t) * d..(r * l + t + 1) * d].iter_mut().zip(&acc) {
                    *o = a * inv;
                }
            }
        }
    }

    let dense = |input: &[f64], w: usize, bias: usize| {
        let mut z = vec![0.0; n * d];
        ops::matmul(input, val(w), n, d, d, &mut z);
        for row in z.chunks_exact_mut(d) {
            row.iter_mut().zip(val(bias)).for_each(|(zi, bi)| *zi += bi);
        }
        z
    };
    let Some(ly) = &idx.layers else {
        let cache = Cache {
            idx,
            count,
            h0: Vec::new(),
            z1: Vec::new(),
            a1: Vec::new(),
            z2: Vec::new(),
        };
        return Ok((h0, cache));
    };
    let z1 = dense(&h0, ly.w1, ly.b1);
    let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let z2 = dense(&a1, ly.w2, ly.b2);
    let h: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();

    Ok((
        h,
        Cache {
            idx,
            count,
            h0,
            z1,
            a1,
            z2,
        },
    ))
}

pub(crate) fn backward(
    params: &[ParamTensor<f64>],
    spec: &ModelSpec,
    batch: &Batch,
    cache: &Cache,
    dh: &[f64],
    grads: &mut Grads,
) {
    let c = cache;
    let idx = &c.idx;
    let val = |i: usize| params[i].value.as_slice();
    let (b, l, d) = (batch.batch_size, batch.max_len, spec.embed_dim);
    let n = b * l;

    let relu_back = |g: &[f64], z: &[f64]| -> Vec<f64> {
        g.iter()
            .zip(z)
            .map(|(&gi, &zi)| if zi > 0.0 { gi } else { 0.0 })
            .collect()
    };

    let dh0 = match &idx.layers {
        None => dh.to_vec(),
        Some(ly) => {
            let dz2 = relu_back(dh, &c.z2);
            for row in dz2.chunks_exact(d) {
                ops::axpy(1.0, row, grads.get(ly.b2));
            }
            ops::matmul_tn_acc(&c.a1, &dz2, n, d, d, grads.get(ly.w2));
            let mut da1 = vec![0.0; n * d];
            ops::matmul_nt_acc(&dz2, val(ly.w2), n, d, d, &mut da1);

            let dz1 = relu_back(&da1, &c.z1);
            for row in dz1.chunks_exact(d) {
                ops::axpy(1.0, row, grads.get(ly.b1));
            }
            ops::matmul_tn_acc(&c.h0, &dz1, n, d, d, grads.get(ly.w1));
            let mut dh0 = vec![0.0; n * d];
            ops::matmul_nt_acc(&dz1, val(ly.w1), n, d, d, &mut dh0);
            dh0
        }
    };

    // Position t averages every non-pad input at j <= t, so input j receives
    // the sum of dh0[t] / count[t] over t >= j.
    let de = grads.get(idx.e);
    let mut acc = vec![0.0; d];
    for r in 0..b {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for t in (0..l).rev() {
            let cnt = c.count[r * l + t];
            if cnt > 0 {
                ops::axpy(
                    1.0 / cnt as f64,
                    &dh0[(r * l + t) * d..(r * l + t + 1) * d],
                    &mut acc,
                );
            }
            let id = batch.inputs[r * l + t];
            if id != 0 {
                ops::axpy(1.0, &acc, &mut de[id * d..(id + 1) * d]);
            }
        }
    }
}
