//! Co-occurrence item embeddings: a small skip-gram style trainer over adjacent
//! items in user sequences. It stands in for a pretrained sequential CF model;
//! externally trained matrices can be loaded through the feature store instead.

use std::collections::{BTreeSet, HashSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::features::{FeatureTable, FeatureType};
use crate::data::records::InteractionRecord;
use crate::data::sequence::build_sequences;
use crate::error::{Error, Result};

const LEARNING_RATE: f64 = 0.05;
const INIT_SCALE: f64 = 0.1;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn cf_pretrain_cooccurrence(
    records: &[InteractionRecord],
    dim: usize,
    epochs: usize,
    seed: u64,
) -> Result<FeatureTable> {
    if records.is_empty() {
        return Err(Error::invalid("co-occurrence training needs at least one interaction"));
    }
    let items: Vec<String> = records
        .iter()
        .map(|r| r.item_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |id: &str| items.binary_search_by(|x| x.as_str().cmp(id)).expect("known item");

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut adjacent: HashSet<(usize, usize)> = HashSet::new();
    for s in build_sequences(records) {
        for w in s.items.windows(2) {
            let (a, b) = (index(&w[0]), index(&w[1]));
            if a != b {
                pairs.push((a, b));
                adjacent.insert((a, b));
                adjacent.insert((b, a));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emb: Vec<Vec<f64>> = (0..items.len())
        .map(|_| (0..dim).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE)).collect())
        .collect();

    for _ in 0..epochs {
        pairs.shuffle(&mut rng);
        for &(a, b) in &pairs {
            // Both directions, one non-adjacent negative each.
            for (x, y) in [(a, b), (b, a)] {
                let neg = (0..8)
                    .map(|_| rng.gen_range(0..items.len()))
                    .find(|&c| c != x && !adjacent.contains(&(x, c)));
                sgd_pair(&mut emb, x, y, 1.0);
                if let Some(c) = neg {
                    sgd_pair(&mut emb, x, c, 0.0);
                }
            }
        }
    }

    let rows = items
        .into_iter()
        .zip(emb)
        .map(|(id, v)| (id, v.into_iter().map(|x| x as f32).collect()))
        .collect();
    FeatureTable::new(FeatureType::Cf, dim, rows)
}

fn sgd_pair(emb: &mut [Vec<f64>], x: usize, y: usize, label: f64) {
    let score: f64 = emb[x].iter().zip(&emb[y]).map(|(p, q)| p * q).sum();
    let g = sigmoid(score) - label;
    for k in 0..emb[x].len() {
        let (ex, ey) = (emb[x][k], emb[y][k]);
        emb[x][k] -= LEARNING_RATE * g * ey;
        emb[y][k] -= LEARNING_RATE * g * ex;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_log() -> Vec<InteractionRecord> {
        let mut recs = Vec::new();
        for u in 0..20 {
            let user = format!("u{u}");
            recs.push(InteractionRecord::new(&user, "a", 1));
            recs.push(InteractionRecord::new(&user, "b", 2));
        }
        // "c" only ever sits next to "d".
        for u in 20..30 {
            let user = format!("u{u}");
            recs.push(InteractionRecord::new(&user, "c", 1));
            recs.push(InteractionRecord::new(&user, "d", 2));
        }
        recs
    }

    fn dot(a: &[f32], b: &[f32]) -> f32 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn adjacent_items_score_higher() {
        let t = cf_pretrain_cooccurrence(&toy_log(), 8, 30, 1).unwrap();
        let (a, b, c) = (t.row("a").unwrap(), t.row("b").unwrap(), t.row("c").unwrap());
        assert!(dot(a, b) > dot(a, c), "{} vs {}", dot(a, b), dot(a, c));
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let t1 = cf_pretrain_cooccurrence(&toy_log(), 4, 0, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let first: Vec<f32> = (0..4).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE) as f32).collect();
        assert_eq!(t1.row("a").unwrap(), first.as_slice());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = cf_pretrain_cooccurrence(&toy_log(), 4, 3, 9).unwrap();
        let b = cf_pretrain_cooccurrence(&toy_log(), 4, 3, 9).unwrap();
        assert_eq!(a, b);
        assert!(cf_pretrain_cooccurrence(&[], 4, 1, 9).is_err());
    }
}
