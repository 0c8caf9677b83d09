//! Two small next-item recommenders with exact hand-written gradients:
//! a one-block causal self-attention model and a mean-pooling MLP. Both
//! tie the output projection to the item embedding table.

mod ops;
mod params;
mod poolrec;
mod sasrec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use params::{ParamTensor, Role, Tensor};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    SASRecLite,
    PoolRec,
    /// PoolRec without the hidden layers; every parameter is an embedding.
    MeanPool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Number of items plus one for the padding id 0.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub max_len: usize,
    pub ffn_dim: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig("vocab_size must be >= 2".into()));
        }
        if self.embed_dim == 0 || self.max_len == 0 {
            return Err(Error::InvalidConfig("embed_dim and max_len must be >= 1".into()));
        }
        if self.kind == ModelKind::SASRecLite && self.ffn_dim == 0 {
            return Err(Error::InvalidConfig("ffn_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Left-padded item sequences with next-item targets, `batch_size × max_len`.
/// Target 0 marks an unsupervised position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub batch_size: usize,
    pub max_len: usize,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    /// Dataset user index of each row.
    pub users: Vec<usize>,
}

impl Batch {
    pub fn new(max_len: usize, rows: Vec<(Vec<usize>, Vec<usize>)>, users: Vec<usize>) -> Result<Self> {
        let batch_size = rows.len();
        let mut inputs = Vec::with_capacity(batch_size * max_len);
        let mut targets = Vec::with_capacity(batch_size * max_len);
        for (i, t) in rows {
            if i.len() != max_len || t.len() != max_len {
                return Err(Error::InvalidConfig(format!(
                    "batch row length must equal max_len {max_len}"
                )));
            }
            inputs.extend(i);
            targets.extend(t);
        }
        if users.len() != batch_size {
            return Err(Error::InvalidConfig("one user index per batch row".into()));
        }
        Ok(Self {
            batch_size,
            max_len,
            inputs,
            targets,
            users,
        })
    }

    pub fn supervised(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != 0)
            .map(|(pos, &t)| (pos, t))
    }

    pub fn num_supervised(&self) -> usize {
        self.targets.iter().filter(|&&t| t != 0).count()
    }

    fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.max_len != spec.max_len {
            return Err(Error::InvalidConfig(format!(
                "batch max_len {} differs from model max_len {}",
                self.max_len, spec.max_len
            )));
        }
        if let Some(&id) = self
            .inputs
            .iter()
            .chain(&self.targets)
            .find(|&&id| id >= spec.vocab_size)
        {
            return Err(Error::IdOutOfRange {
                id,
                vocab_size: spec.vocab_size,
            });
        }
        Ok(())
    }
}

pub(crate) fn find(params: &[ParamTensor<f64>], name: &str) -> Result<usize> {
    params
        .iter()
        .position(|p| p.name == name)
        .ok_or_else(|| Error::InvalidConfig(format!("model is missing parameter `{name}`")))
}

/// Gradient buffers aligned with the parameter list.
pub(crate) struct Grads(Vec<Vec<f64>>);

impl Grads {
    fn new(params: &[ParamTensor<f64>]) -> Self {
        Self(params.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    pub(crate) fn get(&mut self, i: usize) -> &mut [f64] {
        &mut self.0[i]
    }

    pub(crate) fn pair(&mut self, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a, b);
        if a < b {
            let (lo, hi) = self.0.split_at_mut(b);
            (&mut lo[a], &mut hi[0])
        } else {
            let (lo, hi) = self.0.split_at_mut(a);
            (&mut hi[0], &mut lo[b])
        }
    }
}

/// Deterministic initialization from `spec.seed`.
///
/// Matrices and embeddings draw from `N(0, 0.02²)`, biases start at zero,
/// LayerNorm gains at one. Row 0 of `E` (padding) is zero.
pub fn init_model(spec: &ModelSpec) -> Result<Vec<ParamTensor<f64>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut gauss = |rows: usize, cols: usize| -> Tensor<f64> {
        let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        Tensor::matrix(rows, cols, data).expect("positive dims")
    };
    let (v, d, l, f) = (spec.vocab_size, spec.embed_dim, spec.max_len, spec.ffn_dim);

    let mut emb = gauss(v, d);
    emb.as_mut_slice()[..d].iter_mut().for_each(|x| *x = 0.0);

    let ones = |n: usize| Tensor::vector(vec![1.0; n]);
    let zeros = |n: usize| Tensor::vector(vec![0.0; n]);
    let list: Vec<(&str, Role, Tensor<f64>)> = match spec.kind {
        ModelKind::SASRecLite => vec![
            ("E", Role::Embedding, emb),
            ("P", Role::PositionalEmbedding, gauss(l, d)),
            ("W_Q", Role::HiddenMatrix, gauss(d, d)),
            ("W_K", Role::HiddenMatrix, gauss(d, d)),
            ("W_V", Role::HiddenMatrix, gauss(d, d)),
            ("W_O", Role::HiddenMatrix, gauss(d, d)),
            ("ln1.gain", Role::LayerNormGain, ones(d)),
            ("ln1.bias", Role::LayerNormBias, zeros(d)),
            ("W_1", Role::HiddenMatrix, gauss(d, f)),
            ("b_1", Role::Bias, zeros(f)),
            ("W_2", Role::HiddenMatrix, gauss(f, d)),
            ("b_2", Role::Bias, zeros(d)),
            ("ln2.gain", Role::LayerNormGain, ones(d)),
            ("ln2.bias", Role::LayerNormBias, zeros(d)),
        ],
        ModelKind::PoolRec => vec![
            ("E", Role::Embedding, emb),
            ("W_1", Role::HiddenMatrix, gauss(d, d)),
            ("b_1", Role::Bias, zeros(d)),
            ("W_2", Role::HiddenMatrix, gauss(d, d)),
            ("b_2", Role::Bias, zeros(d)),
        ],
        ModelKind::MeanPool => vec![("E", Role::Embedding, emb)],
    };
    list.into_iter()
        .map(|(name, role, value)| ParamTensor::new(name, role, value))
        .collect()
}

enum Cache {
    Sas(sasrec::Cache),
    Pool(poolrec::Cache),
}

fn hidden(params: &[ParamTensor<f64>], spec: &ModelSpec, batch: &Batch) -> Result<(Vec<f64>, Cache)> {
    spec.validate()?;
    batch.check(spec)?;
    Ok(match spec.kind {
        ModelKind::SASRecLite => {
            let (h, c) = sasrec::forward(params, spec, batch)?;
            (h, Cache::Sas(c))
        }
        ModelKind::PoolRec | ModelKind::MeanPool => {
            let (h, c) = poolrec::forward(params, spec, batch)?;
            (h, Cache::Pool(c))
        }
    })
}

fn embedding<'a>(params: &'a [ParamTensor<f64>], spec: &ModelSpec) -> Result<&'a [f64]> {
    let e = &params[find(params, "E")?].value;
    if e.shape() != [spec.vocab_size, spec.embed_dim] {
        return Err(Error::ShapeMismatch {
            name: "E".into(),
            expected: vec![spec.vocab_size, spec.embed_dim],
            actual: e.shape().to_vec(),
        });
    }
    Ok(e.as_slice())
}

/// `out = h · Eᵀ` for `rows` hidden vectors.
fn project(h: &[f64], emb: &[f64], rows: usize, d: usize, v: usize, out: &mut [f64]) {
    ops::gemm(rows, d, v, h, false, emb, true, 0.0, out);
}

/// Logits for every position, `batch_size × max_len × vocab_size`, row-major.
pub fn forward(params: &[ParamTensor<f64>], spec: &ModelSpec, batch: &Batch) -> Result<Vec<f64>> {
    let (h, _) = hidden(params, spec, batch)?;
    let emb = embedding(params, spec)?;
    let (d, v) = (spec.embed_dim, spec.vocab_size);
    let positions = batch.batch_size * batch.max_len;
    let mut logits = vec![0.0; positions * v];
    project(&h, emb, positions, d, v, &mut logits);
    Ok(logits)
}

/// Scores over the whole vocabulary at the last position of each row.
pub fn score_last(params: &[ParamTensor<f64>], spec: &ModelSpec, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    let (h, _) = hidden(params, spec, batch)?;
    let emb = embedding(params, spec)?;
    let (d, l, v) = (spec.embed_dim, batch.max_len, spec.vocab_size);
    let last: Vec<f64> = (0..batch.batch_size)
        .flat_map(|r| {
            let p = r * l + l - 1;
            h[p * d..(p + 1) * d].iter().copied()
        })
        .collect();
    let mut scores = vec![0.0; batch.batch_size * v];
    project(&last, emb, batch.batch_size, d, v, &mut scores);
    Ok(scores.chunks_exact(v).map(<[f64]>::to_vec).collect())
}

/// Supervised positions per softmax block; bounds the logits buffer.
const SOFTMAX_BLOCK: usize = 1024;

/// Mean next-item cross-entropy over supervised positions; writes exact
/// gradients into every parameter's `grad`.
///
/// A batch with no supervised position yields loss 0 and zero gradients.
pub fn loss_and_backward(
    params: &mut [ParamTensor<f64>],
    spec: &ModelSpec,
    batch: &Batch,
) -> Result<f64> {
    params.iter_mut().for_each(ParamTensor::zero_grad);
    let supervised = batch.num_supervised();
    if supervised == 0 {
        batch.check(spec)?;
        return Ok(0.0);
    }
    let (h, cache) = hidden(params, spec, batch)?;
    let e_idx = find(params, "E")?;
    let emb = embedding(params, spec)?;
    let (d, v) = (spec.embed_dim, spec.vocab_size);

    let mut grads = Grads::new(params);
    let mut dh = vec![0.0; h.len()];
    let inv_n = 1.0 / supervised as f64;
    let mut loss = 0.0;
    let positions: Vec<(usize, usize)> = batch.supervised().collect();
    let mut logits = vec![0.0; SOFTMAX_BLOCK.min(supervised) * v];
    for block in positions.chunks(SOFTMAX_BLOCK) {
        let n = block.len();
        let hs: Vec<f64> = block
            .iter()
            .flat_map(|&(pos, _)| h[pos * d..(pos + 1) * d].iter().copied())
            .collect();
        let logits = &mut logits[..n * v];
        project(&hs, emb, n, d, v, logits);
        // Turn each row into the softmax gradient (p − onehot) / n.
        for (row, &(_, target)) in logits.chunks_exact_mut(v).zip(block) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            loss += -((row[target] / sum).ln());
            let scale = inv_n / sum;
            row.iter_mut().for_each(|x| *x *= scale);
            row[target] -= inv_n;
        }
        let mut dhs = vec![0.0; n * d];
        ops::gemm(n, v, d, logits, false, emb, false, 0.0, &mut dhs);
        ops::gemm(v, n, d, logits, true, &hs, false, 1.0, grads.get(e_idx));
        for (&(pos, _), g) in block.iter().zip(dhs.chunks_exact(d)) {
            dh[pos * d..(pos + 1) * d].copy_from_slice(g);
        }
    }
    loss *= inv_n;

    match &cache {
        Cache::Sas(c) => sasrec::backward(params, spec, batch, c, &dh, &mut grads),
        Cache::Pool(c) => poolrec::backward(params, spec, batch, c, &dh, &mut grads),
    }
    // The padding row is not trainable.
    grads.get(e_idx)[..d].iter_mut().for_each(|x| *x = 0.0);

    for (p, g) in params.iter_mut().zip(grads.0) {
        p.grad.as_mut_slice().copy_from_slice(&g);
    }
    Ok(loss)
}
