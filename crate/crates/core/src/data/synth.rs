use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::InteractionDataset;

/// Latent-factor sequence generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub num_users: usize,
    pub num_items: usize,
    pub factors: usize,
    pub temperature: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            num_users: 2000,
            num_items: 3000,
            factors: 16,
            temperature: 3.0,
            min_len: 8,
            max_len: 40,
            seed: 42,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.factors == 0 {
            return Err(Error::InvalidConfig(
                "synthetic users, items and factors must be positive".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("synthetic temperature must be >= 0".into()));
        }
        if self.min_len < 5 || self.max_len < self.min_len {
            return Err(Error::InvalidConfig(format!(
                "synthetic lengths need 5 <= min_len <= max_len, got [{}, {}]",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }
}

/// Generates sequences from a latent-factor model.
///
/// Users and items get factors from `N(0, I/k)`. The first item is drawn from
/// `softmax(τ·u·v_j)`, each later one from `softmax(τ·(u·v_j + v_prev·v_j))`.
/// Items are drawn with replacement. The result is already split.
pub fn synth_generate(params: &SynthParams) -> Result<InteractionDataset> {
    params.validate()?;
    let (n_items, k) = (params.num_items, params.factors);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("valid std");

    let items: Vec<f64> = (0..n_items * k).map(|_| normal.sample(&mut rng)).collect();
    let item = |j: usize| &items[j * k..(j + 1) * k];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let tau = params.temperature;
    let mut user_affinity = vec![0.0; n_items];
    let mut weights = vec![0.0; n_items];
    let mut users = Vec::with_capacity(params.num_users);
    for u in 0..params.num_users {
        let factor: Vec<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
        for (j, a) in user_affinity.iter_mut().enumerate() {
            *a = dot(&factor, item(j));
        }
        let len = rng.gen_range(params.min_len..=params.max_len);
        let mut seq = Vec::with_capacity(len);
        let mut prev: Option<usize> = None;
        for _ in 0..len {
            for (j, w) in weights.iter_mut().enumerate() {
                let transition = prev.map_or(0.0, |p| dot(item(p), item(j)));
                *w = tau * (user_affinity[j] + transition);
            }
            let next = sample_softmax(&mut weights, &mut rng);
            seq.push((next + 1).to_string());
            prev = Some(next);
        }
        users.push((format!("{}", u + 1), seq));
    }
    InteractionDataset::from_sequences(users)
}

/// Draws an index from `softmax(logits)`; overwrites `logits` with cumulative weights.
fn sample_softmax(logits: &mut [f64], rng: &mut ChaCha8Rng) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in logits.iter_mut() {
        total += (*w - max).exp();
        *w = total;
    }
    let r = rng.gen::<f64>() * total;
    logits.partition_point(|&c| c <= r).min(logits.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            num_users: 200,
            num_items: 150,
            factors: 8,
            min_len: 8,
            max_len: 12,
            ..SynthParams::default()
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(synth_generate(&small()).unwrap(), synth_generate(&small()).unwrap());
        let other = SynthParams { seed: 7, ..small() };
        assert_ne!(synth_generate(&small()).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn length_contract() {
        let ds = synth_generate(&small()).unwrap();
        assert_eq!(ds.num_users, 200);
        assert!(ds.sequences.iter().all(|s| (8..=12).contains(&s.len())));
        ds.validate().unwrap();
    }

    #[test]
    fn zero_temperature_is_uniform() {
        // 100 items, 10⁵ draws; critical χ² for 99 dof at p = 0.001.
        let p = SynthParams {
            num_users: 5000,
            num_items: 100,
            factors: 4,
            temperature: 0.0,
            min_len: 20,
            max_len: 20,
            seed: 1,
        };
        let ds = synth_generate(&p).unwrap();
        let mut counts = vec![0f64; ds.num_items + 1];
        for &i in ds.sequences.iter().flatten() {
            counts[i] += 1.0;
        }
        assert_eq!(ds.num_items, 100);
        let expected = 100_000.0 / 100.0;
        let chi2: f64 = counts[1..].iter().map(|c| (c - expected).powi(2) / expected).sum();
        assert!(chi2 < 148.23, "chi2 = {chi2}");
    }

    #[test]
    fn rejects_short_sequences() {
        let p = SynthParams { min_len: 4, ..small() };
        assert!(synth_generate(&p).is_err());
        let p = SynthParams { max_len: 7, ..small() };
        assert!(synth_generate(&p).is_err());
    }
}
