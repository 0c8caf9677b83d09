use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::Record;

/// Per-user chronological item sequences with a leave-one-out split.
///
/// Item ids are dense in `1..=num_items`; 0 is the padding id. The last
/// item of each sequence is the test item, the one before it the
/// validation item, and the rest is the training prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub sequences: Vec<Vec<usize>>,
    /// Original user labels, by user index.
    pub user_ids: Vec<String>,
    /// Original item labels; `item_ids[i - 1]` belongs to item `i`.
    pub item_ids: Vec<String>,
}

impl InteractionDataset {
    /// Builds a dataset from labelled chronological sequences. Users with
    /// fewer than three interactions are dropped; items are numbered by
    /// first appearance, scanning users in order.
    pub fn from_sequences(users: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut item_ids = Vec::new();
        let mut user_ids = Vec::new();
        let mut sequences = Vec::new();
        for (user, items) in users.into_iter().filter(|(_, s)| s.len() >= 3) {
            let seq = items
                .into_iter()
                .map(|label| {
                    *index.entry(label.clone()).or_insert_with(|| {
                        item_ids.push(label);
                        item_ids.len()
                    })
                })
                .collect();
            user_ids.push(user);
            sequences.push(seq);
        }
        if sequences.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            num_users: sequences.len(),
            num_items: item_ids.len(),
            sequences,
            user_ids,
            item_ids,
        })
    }

    pub fn train_prefix(&self, user: usize) -> &[usize] {
        let s = &self.sequences[user];
        &s[..s.len() - 2]
    }

    pub fn validation_item(&self, user: usize) -> usize {
        let s = &self.sequences[user];
        s[s.len() - 2]
    }

    pub fn test_item(&self, user: usize) -> usize {
        *self.sequences[user].last().expect("sequences have >= 3 items")
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn item_label(&self, item: usize) -> &str {
        &self.item_ids[item - 1]
    }

    /// Vocabulary size for a model over this dataset (items plus padding).
    pub fn vocab_size(&self) -> usize {
        self.num_items + 1
    }

    /// SHA-256 over the sequences, stable across runs and platforms.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_users as u64).to_le_bytes());
        h.update((self.num_items as u64).to_le_bytes());
        for seq in &self.sequences {
            h.update((seq.len() as u64).to_le_bytes());
            for &i in seq {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("invalid dataset: {m}")));
        if self.sequences.len() != self.num_users || self.user_ids.len() != self.num_users {
            return bad("user count mismatch");
        }
        if self.item_ids.len() != self.num_items {
            return bad("item count mismatch");
        }
        let mut seen = vec![false; self.num_items + 1];
        for s in &self.sequences {
            if s.len() < 3 {
                return bad("sequence shorter than 3");
            }
            for &i in s {
                if i == 0 || i > self.num_items {
                    return bad("item id out of range");
                }
                seen[i] = true;
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return bad("item ids are not dense");
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ds: Self = serde_json::from_slice(&bytes)?;
        ds.validate()?;
        Ok(ds)
    }
}

/// Chronological leave-one-out split. Each user's records are ordered by
/// timestamp, ties kept in input order.
pub fn leave_one_out_split(records: &[Record]) -> Result<InteractionDataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: HashMap<&str, usize> = HashMap::new();
    let mut per_user: Vec<(String, Vec<(i64, &str)>)> = Vec::new();
    for r in records {
        let slot = *order.entry(&r.user_id).or_insert_with(|| {
            per_user.push((r.user_id.clone(), Vec::new()));
            per_user.len() - 1
        });
        per_user[slot].1.push((r.timestamp, &r.item_id));
    }
    let users = per_user
        .into_iter()
        .map(|(u, mut events)| {
            events.sort_by_key(|&(t, _)| t);
            (u, events.into_iter().map(|(_, i)| i.to_string()).collect())
        })
        .collect();
    InteractionDataset::from_sequences(users)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, i: &str, t: i64) -> Record {
        Record {
            user_id: u.into(),
            item_id: i.into(),
            timestamp: t,
        }
    }

    #[test]
    fn split_by_time() {
        let r = vec![rec("u", "c", 3), rec("u", "a", 1), rec("u", "d", 4), rec("u", "b", 2)];
        let ds = leave_one_out_split(&r).unwrap();
        let label = |i: usize| ds.item_label(i).to_string();
        let train: Vec<_> = ds.train_prefix(0).iter().map(|&i| label(i)).collect();
        assert_eq!(train, ["a", "b"]);
        assert_eq!(label(ds.validation_item(0)), "c");
        assert_eq!(label(ds.test_item(0)), "d");
    }

    #[test]
    fn ties_keep_file_order() {
        let r = vec![rec("u", "x", 1), rec("u", "y", 5), rec("u", "z", 5)];
        let ds = leave_one_out_split(&r).unwrap();
        assert_eq!(ds.item_label(ds.validation_item(0)), "y");
        assert_eq!(ds.item_label(ds.test_item(0)), "z");
    }

    #[test]
    fn hand_counted_statistics() {
        // Five users; u5 has only two events and is dropped.
        let mut r = Vec::new();
        for (u, items) in [
            ("u1", "a b c d"),
            ("u2", "b c e"),
            ("u3", "a a f g h"),
            ("u4", "c d e f"),
            ("u5", "a b"),
        ] {
            for (t, i) in items.split(' ').enumerate() {
                r.push(rec(u, i, t as i64));
            }
        }
        let ds = leave_one_out_split(&r).unwrap();
        assert_eq!(ds.num_users, 4);
        assert_eq!(ds.num_items, 8);
        assert_eq!(ds.num_interactions(), 16);
        assert_eq!(ds.sequences[0], vec![1, 2, 3, 4]);
        assert_eq!(ds.sequences[2], vec![1, 1, 6, 7, 8]);
        ds.validate().unwrap();
    }

    #[test]
    fn split_partitions_each_sequence() {
        let r: Vec<_> = (0..12).map(|t| rec(&format!("u{}", t % 3), &format!("i{t}"), t)).collect();
        let ds = leave_one_out_split(&r).unwrap();
        for u in 0..ds.num_users {
            assert_eq!(ds.train_prefix(u).len() + 2, ds.sequences[u].len());
            assert_eq!(ds.test_item(u), *ds.sequences[u].last().unwrap());
        }
        let mut all: Vec<usize> = ds.sequences.concat();
        all.sort();
        all.dedup();
        assert_eq!(all, (1..=ds.num_items).collect::<Vec<_>>());
    }

    #[test]
    fn empty_input() {
        assert!(matches!(leave_one_out_split(&[]), Err(Error::EmptyDataset)));
    }
}
