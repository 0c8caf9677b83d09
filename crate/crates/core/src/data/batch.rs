use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Batch;

use super::InteractionDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One pass of batches over `split`.
///
/// Training rows pair each prefix item with its successor, keep the most
/// recent `max_len` pairs and left-pad; user order is shuffled by
/// `(seed, epoch)`. Evaluation rows carry the user's history as context
/// and supervise only the held-out item at the last position.
pub fn make_batches(
    dataset: &InteractionDataset,
    max_len: usize,
    batch_size: usize,
    split: Split,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>> {
    let batch_size = batch_size.max(1);
    let mut users: Vec<usize> = (0..dataset.num_users).collect();
    if split == Split::Train {
        users.retain(|&u| dataset.train_prefix(u).len() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        users.shuffle(&mut rng);
    }
    users
        .chunks(batch_size)
        .map(|chunk| {
            let rows = chunk.iter().map(|&u| row(dataset, u, split, max_len)).collect();
            Batch::new(max_len, rows, chunk.to_vec())
        })
        .collect()
}

fn row(ds: &InteractionDataset, user: usize, split: Split, max_len: usize) -> (Vec<usize>, Vec<usize>) {
    let prefix = ds.train_prefix(user);
    let (inputs, targets): (Vec<usize>, Vec<usize>) = match split {
        Split::Train => (
            prefix[..prefix.len() - 1].to_vec(),
            prefix[1..].to_vec(),
        ),
        Split::Validation => held_out(prefix.to_vec(), ds.validation_item(user)),
        Split::Test => {
            let mut ctx = prefix.to_vec();
            ctx.push(ds.validation_item(user));
            held_out(ctx, ds.test_item(user))
        }
    };
    (left_pad(&inputs, max_len), left_pad(&targets, max_len))
}

fn held_out(context: Vec<usize>, target: usize) -> (Vec<usize>, Vec<usize>) {
    let mut targets = vec![0; context.len()];
    *targets.last_mut().expect("non-empty context") = target;
    (context, targets)
}

fn left_pad(seq: &[usize], len: usize) -> Vec<usize> {
    let tail = &seq[seq.len().saturating_sub(len)..];
    let mut out = vec![0; len - tail.len()];
    out.extend_from_slice(tail);
    out
}
