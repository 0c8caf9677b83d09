//! Central finite-difference checks of the hand-written backward passes.

use muonrec::model::{forward, init_model, loss_and_backward, Batch, ModelKind, ModelSpec, ParamTensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn tiny(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        vocab_size: 10,
        embed_dim: 4,
        max_len: 5,
        ffn_dim: 8,
        seed: 11,
    }
}

fn batch() -> Batch {
    Batch::new(
        5,
        vec![
            (vec![0, 3, 7, 1, 9], vec![0, 7, 1, 9, 2]),
            (vec![5, 2, 2, 8, 4], vec![2, 2, 8, 4, 6]),
        ],
        vec![0, 1],
    )
    .unwrap()
}

/// Init with larger weights than training uses so every nonlinearity is exercised.
fn perturbed(spec: &ModelSpec) -> Vec<ParamTensor<f64>> {
    let mut ps = init_model(spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for p in &mut ps {
        let offset = if p.name.ends_with("gain") { 1.0 } else { 0.0 };
        for x in p.value.as_mut_slice() {
            *x = offset + rng.gen_range(-0.6..0.6);
        }
        if p.name == "E" {
            p.value.as_mut_slice()[..spec.embed_dim].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    ps
}

fn loss_at(ps: &[ParamTensor<f64>], spec: &ModelSpec, b: &Batch) -> f64 {
    let mut copy = ps.to_vec();
    loss_and_backward(&mut copy, spec, b).unwrap()
}

fn check(kind: ModelKind) {
    let spec = tiny(kind);
    let b = batch();
    let mut ps = perturbed(&spec);
    loss_and_backward(&mut ps, &spec, &b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    for i in 0..ps.len() {
        let n = ps[i].value.len();
        // The padding row of E is frozen and reports a zero gradient.
        let skip = if ps[i].name == "E" { spec.embed_dim } else { 0 };
        let candidates = n - skip;
        let picks = sample(&mut rng, candidates, candidates.min(50));
        let mut worst = 0.0f64;
        for j in picks.into_iter().map(|j| j + skip) {
            let analytic = ps[i].grad.as_slice()[j];
            let mut plus = ps.clone();
            plus[i].value.as_mut_slice()[j] += H;
            let mut minus = ps.clone();
            minus[i].value.as_mut_slice()[j] -= H;
            let numeric = (loss_at(&plus, &spec, &b) - loss_at(&minus, &spec, &b)) / (2.0 * H);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            let rel = (analytic - numeric).abs() / denom;
            worst = worst.max(rel);
            assert!(
                rel <= TOL,
                "{kind:?} {}[{j}]: analytic {analytic:e} numeric {numeric:e} rel {rel:e}",
                ps[i].name
            );
        }
        eprintln!("{kind:?} {:<9} max rel err {worst:.2e}", ps[i].name);
    }
}

#[test]
fn sasrec_lite_gradients_match_finite_differences() {
    check(ModelKind::SASRecLite);
}

#[test]
fn poolrec_gradients_match_finite_differences() {
    check(ModelKind::PoolRec);
}

#[test]
fn causal_masking_is_exact() {
    for kind in [ModelKind::SASRecLite, ModelKind::PoolRec, ModelKind::MeanPool] {
        let spec = tiny(kind);
        let ps = perturbed(&spec);
        let base = Batch::new(5, vec![(vec![1, 2, 3, 4, 5], vec![0; 5])], vec![0]).unwrap();
        let a = forward(&ps, &spec, &base).unwrap();
        for j in 1..5 {
            let mut inputs = vec![1, 2, 3, 4, 5];
            inputs[j] = 9;
            let changed = Batch::new(5, vec![(inputs, vec![0; 5])], vec![0]).unwrap();
            let b = forward(&ps, &spec, &changed).unwrap();
            let v = spec.vocab_size;
            assert_eq!(a[..j * v], b[..j * v], "{kind:?} position {j} leaked backwards");
            assert_ne!(a[j * v..], b[j * v..]);
        }
    }
}

#[test]
fn duplicated_batch_leaves_loss_and_grads() {
    for kind in [ModelKind::SASRecLite, ModelKind::PoolRec, ModelKind::MeanPool] {
        let spec = tiny(kind);
        let b = batch();
        let mut doubled_rows = Vec::new();
        for _ in 0..2 {
            for r in 0..b.batch_size {
                let s = r * 5..(r + 1) * 5;
                doubled_rows.push((b.inputs[s.clone()].to_vec(), b.targets[s].to_vec()));
            }
        }
        let doubled = Batch::new(5, doubled_rows, vec![0, 1, 0, 1]).unwrap();
        let mut p1 = perturbed(&spec);
        let mut p2 = p1.clone();
        let l1 = loss_and_backward(&mut p1, &spec, &b).unwrap();
        let l2 = loss_and_backward(&mut p2, &spec, &doubled).unwrap();
        assert!((l1 - l2).abs() <= 1e-12);
        for (a, c) in p1.iter().zip(&p2) {
            for (x, y) in a.grad.as_slice().iter().zip(c.grad.as_slice()) {
                assert!((x - y).abs() <= 1e-12, "{}", a.name);
            }
        }
    }
}

#[test]
fn padding_rows_are_neutral() {
    for kind in [ModelKind::SASRecLite, ModelKind::PoolRec, ModelKind::MeanPool] {
        let spec = tiny(kind);
        let b = batch();
        let mut rows: Vec<_> = (0..2)
            .map(|r| (b.inputs[r * 5..r * 5 + 5].to_vec(), b.targets[r * 5..r * 5 + 5].to_vec()))
            .collect();
        rows.push((vec![0; 5], vec![0; 5]));
        let padded = Batch::new(5, rows, vec![0, 1, 2]).unwrap();
        let mut p1 = perturbed(&spec);
        let mut p2 = p1.clone();
        let l1 = loss_and_backward(&mut p1, &spec, &b).unwrap();
        let l2 = loss_and_backward(&mut p2, &spec, &padded).unwrap();
        assert!((l1 - l2).abs() <= 1e-12);
        for (a, c) in p1.iter().zip(&p2) {
            for (x, y) in a.grad.as_slice().iter().zip(c.grad.as_slice()) {
                assert!((x - y).abs() <= 1e-12, "{}", a.name);
            }
        }
    }
}

#[test]
fn left_padding_does_not_leak_into_real_positions() {
    // Shorter history in the same row: the real suffix must not see the pads.
    let spec = tiny(ModelKind::SASRecLite);
    let ps = perturbed(&spec);
    let b = Batch::new(5, vec![(vec![0, 0, 3, 4, 5], vec![0; 5])], vec![0]).unwrap();
    let logits = forward(&ps, &spec, &b).unwrap();
    assert!(logits.iter().all(|x| x.is_finite()));
}

#[test]
fn repeated_backward_is_bit_identical() {
    for kind in [ModelKind::SASRecLite, ModelKind::PoolRec, ModelKind::MeanPool] {
        let spec = tiny(kind);
        let mut p1 = perturbed(&spec);
        let mut p2 = p1.clone();
        loss_and_backward(&mut p1, &spec, &batch()).unwrap();
        loss_and_backward(&mut p2, &spec, &batch()).unwrap();
        assert_eq!(p1, p2);
    }
}

#[test]
fn mean_pool_gradients_match_finite_differences() {
    check(ModelKind::MeanPool);
}
