//! Top-K ranking metrics for a single held-out item, and early-stopping
//! convergence tracking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

/// 1-based rank of `target` among the non-excluded items.
///
/// `scores` is indexed by item id; slot 0 is the padding id and never a
/// candidate. Items scoring strictly higher rank ahead; equal scores are
/// broken by the smaller item id.
pub fn rank_of_target(scores: &[f64], target: usize, exclude: &[usize]) -> Result<usize> {
    if target == 0 || target >= scores.len() {
        return Err(Error::IdOutOfRange {
            id: target,
            vocab_size: scores.len(),
        });
    }
    if exclude.contains(&target) {
        return Err(Error::TargetExcluded(target));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("ranking scores".into()));
    }
    let st = scores[target];
    let beats = |i: usize| {
        let s = scores[i];
        s > st || (s == st && i < target)
    };
    let ahead = (1..scores.len()).filter(|&i| beats(i)).count();
    let mut excluded: Vec<usize> = exclude
        .iter()
        .copied()
        .filter(|&i| i > 0 && i < scores.len())
        .collect();
    excluded.sort_unstable();
    excluded.dedup();
    let excluded_ahead = excluded.into_iter().filter(|&i| beats(i)).count();
    Ok(1 + ahead - excluded_ahead)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub num_users_evaluated: usize,
}

impl EvalResult {
    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.ndcg.get(&k).copied().unwrap_or(f64::NAN)
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        self.recall.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// Recall@K and NDCG@K with one relevant item per user:
/// `ndcg = 1/log₂(rank + 1)` inside the cutoff, else 0.
pub fn recall_ndcg(ranks: &[usize], ks: &[usize]) -> Result<EvalResult> {
    if ranks.is_empty() {
        return Err(Error::EmptyRanks);
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidConfig("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    let mut recall = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        let hits = ranks.iter().filter(|&&r| r <= k);
        recall.insert(k, hits.clone().count() as f64 / n);
        ndcg.insert(k, hits.map(|&r| 1.0 / ((r + 1) as f64).log2()).sum::<f64>() / n);
    }
    Ok(EvalResult {
        recall,
        ndcg,
        num_users_evaluated: ranks.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSpec {
    /// Optimizer steps between validations.
    pub eval_every: u64,
    /// Evaluations without strict improvement in NDCG@10 before stopping.
    pub patience: u32,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            eval_every: 10,
            patience: 5,
        }
    }
}

impl ConvergenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "eval_every and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Early stopping on the running maximum of a validation metric.
#[derive(Clone, Debug)]
pub struct ConvergenceTracker {
    patience: u32,
    best: Option<(u64, f64)>,
    last_step: Option<u64>,
    stale: u32,
}

impl ConvergenceTracker {
    pub fn new(spec: ConvergenceSpec) -> Self {
        Self {
            patience: spec.patience,
            best: None,
            last_step: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, step: u64, metric: f64) -> Result<Decision> {
        if let Some(last) = self.last_step {
            if step <= last {
                return Err(Error::OutOfOrderStep { step, last });
            }
        }
        self.last_step = Some(step);
        match self.best {
            Some((_, b)) if !(metric > b) => self.stale += 1,
            _ => {
                self.best = Some((step, metric));
                self.stale = 0;
            }
        }
        Ok(if self.stale >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        })
    }

    /// Step of the best observation: the converged training step.
    pub fn best_step(&self) -> Option<u64> {
        self.best.map(|(s, _)| s)
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best.map(|(_, m)| m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of_target(&[9.0, 0.1, 0.9, 0.3], 2, &[]).unwrap(), 1);
        // Five items, ids 1..=5, all tied: target 3 is third.
        assert_eq!(rank_of_target(&[0.5; 6], 3, &[]).unwrap(), 3);
        assert_eq!(rank_of_target(&[0.0, 0.9, 0.8, 0.1], 3, &[1, 1]).unwrap(), 2);
    }

    #[test]
    fn rank_errors() {
        assert!(matches!(rank_of_target(&[0.0, 1.0, 2.0], 1, &[1]), Err(Error::TargetExcluded(1))));
        assert!(rank_of_target(&[0.0, 1.0, f64::NAN], 1, &[]).is_err());
        assert!(rank_of_target(&[0.0, 1.0], 0, &[]).is_err());
        assert!(rank_of_target(&[1.0], 3, &[]).is_err());
    }

    #[test]
    fn metric_closed_forms() {
        let all_top = recall_ndcg(&[1, 1, 1], &DEFAULT_KS).unwrap();
        for k in DEFAULT_KS {
            assert_eq!(all_top.recall_at(k), 1.0);
            assert_eq!(all_top.ndcg_at(k), 1.0);
        }
        let r3 = recall_ndcg(&[3], &[10]).unwrap();
        assert_eq!(r3.ndcg_at(10), 0.5);
        assert_eq!(r3.recall_at(10), 1.0);
        let r11 = recall_ndcg(&[11], &[10]).unwrap();
        assert_eq!(r11.ndcg_at(10), 0.0);
        assert_eq!(r11.recall_at(10), 0.0);
        assert!(matches!(recall_ndcg(&[], &[10]), Err(Error::EmptyRanks)));
    }

    fn trace(metrics: &[f64], patience: u32) -> (usize, ConvergenceTracker) {
        let mut t = ConvergenceTracker::new(ConvergenceSpec { eval_every: 1, patience });
        for (i, &m) in metrics.iter().enumerate() {
            if t.observe(i as u64 + 1, m).unwrap() == Decision::Stop {
                return (i + 1, t);
            }
        }
        (0, t)
    }

    #[test]
    fn tracker_examples() {
        let (stop, t) = trace(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 2);
        assert_eq!(stop, 0);
        assert_eq!(t.best_step(), Some(6));

        let (stop, t) = trace(&[0.1, 0.2, 0.2, 0.2, 0.2], 3);
        assert_eq!(stop, 5);
        assert_eq!(t.best_step(), Some(2));

        let (stop, t) = trace(&[0.3, 0.3, 0.3], 1);
        assert_eq!(stop, 2);
        assert_eq!(t.best_step(), Some(1));
    }

    #[test]
    fn tracker_rejects_out_of_order() {
        let mut t = ConvergenceTracker::new(ConvergenceSpec::default());
        t.observe(10, 0.1).unwrap();
        assert!(matches!(t.observe(10, 0.2), Err(Error::OutOfOrderStep { .. })));
    }

    fn sort_oracle(scores: &[f64], target: usize, exclude: &[usize]) -> usize {
        let mut cands: Vec<usize> = (1..scores.len()).filter(|i| !exclude.contains(i)).collect();
        cands.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        cands.iter().position(|&i| i == target).unwrap() + 1
    }

    proptest! {
        #[test]
        fn rank_matches_sort(
            scores in prop::collection::vec((0u8..8).prop_map(|x| x as f64 / 4.0), 2..40),
            seed in any::<u64>(),
        ) {
            let n = scores.len();
            let target = 1 + (seed % (n as u64 - 1)) as usize;
            let exclude: Vec<usize> = (0..n).filter(|&i| i != target && (seed >> (i % 60)) & 1 == 1).collect();
            prop_assert_eq!(
                rank_of_target(&scores, target, &exclude).unwrap(),
                sort_oracle(&scores, target, &exclude)
            );
        }

        #[test]
        fn cutoffs_are_monotone(ranks in prop::collection::vec(1usize..30, 1..50)) {
            let r = recall_ndcg(&ranks, &[1, 3, 5, 10, 20]).unwrap();
            let ks = [1, 3, 5, 10, 20];
            for w in ks.windows(2) {
                prop_assert!(r.recall_at(w[0]) <= r.recall_at(w[1]));
                prop_assert!(r.ndcg_at(w[0]) <= r.ndcg_at(w[1]));
            }
            for k in ks {
                prop_assert!(r.ndcg_at(k) <= r.recall_at(k));
            }
        }

        #[test]
        fn tracker_best_is_running_max(ms in prop::collection::vec(0.0f64..1.0, 1..40), patience in 1u32..6) {
            let mut t = ConvergenceTracker::new(ConvergenceSpec { eval_every: 1, patience });
            let mut best = f64::NEG_INFINITY;
            let mut stale = 0;
            for (i, &m) in ms.iter().enumerate() {
                let d = t.observe(i as u64, m).unwrap();
                if m > best { best = m; stale = 0; } else { stale += 1; }
                prop_assert_eq!(t.best_metric(), Some(best));
                prop_assert_eq!(d == Decision::Stop, stale >= patience);
                if d == Decision::Stop { break; }
            }
        }
    }
}
