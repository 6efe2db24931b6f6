//! Evaluation candidate sets, training negatives and popularity grouping.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::records::InteractionRecord;
use crate::data::sequence::UserSplit;
use crate::error::{Error, Result};

/// FNV-1a, used to derive stable per-entity seeds from string ids.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn user_rng(user_id: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(&[user_id.as_bytes(), &seed.to_le_bytes()]))
}

/// Draws `n` distinct negatives uniformly from catalog items the user never
/// interacted with (train, validation and test), then appends the test item.
pub fn sample_candidates(
    user: &UserSplit,
    catalog: &[String],
    n: usize,
    seed: u64,
) -> Result<Vec<String>> {
    sample_candidates_for(user, &user.test, catalog, n, seed)
}

/// As [`sample_candidates`] with an explicit ground-truth item appended.
pub fn sample_candidates_for(
    user: &UserSplit,
    truth: &str,
    catalog: &[String],
    n: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let history: HashSet<&str> = user.history().map(String::as_str).collect();
    let eligible: Vec<&String> = catalog
        .iter()
        .filter(|id| !history.contains(id.as_str()))
        .collect();
    if eligible.len() < n {
        return Err(Error::invalid(format!(
            "user {} has {} eligible negatives, {} requested (short by {})",
            user.user_id,
            eligible.len(),
            n,
            n - eligible.len()
        )));
    }
    let mut rng = user_rng(&user.user_id, seed);
    let mut picks = index::sample(&mut rng, eligible.len(), n).into_vec();
    picks.sort_unstable();
    let mut out: Vec<String> = picks.into_iter().map(|i| eligible[i].clone()).collect();
    out.push(truth.to_string());
    Ok(out)
}

/// One uniform draw from items absent from `history`.
pub fn sample_negative<R: Rng + ?Sized>(
    history: &HashSet<&str>,
    catalog: &[String],
    rng: &mut R,
) -> Result<String> {
    let eligible = catalog.len() - catalog.iter().filter(|c| history.contains(c.as_str())).count();
    if eligible == 0 {
        return Err(Error::invalid("no item outside the user's history"));
    }
    let target = rng.gen_range(0..eligible);
    catalog
        .iter()
        .filter(|c| !history.contains(c.as_str()))
        .nth(target)
        .cloned()
        .ok_or_else(|| Error::invalid("negative sampling index out of range"))
}

/// Interaction count per item, ascending by item id.
pub fn item_counts(records: &[InteractionRecord]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.item_id.clone()).or_insert(0) += 1;
    }
    counts
}

/// Sorts items by (count, item_id) ascending and cuts them into `g` contiguous
/// groups whose sizes differ by at most one. Group ids run 1..=g, coldest first.
pub fn popularity_groups(records: &[InteractionRecord], g: usize) -> BTreeMap<String, usize> {
    let g = g.max(1);
    let mut items: Vec<(usize, String)> = item_counts(records)
        .into_iter()
        .map(|(id, c)| (c, id))
        .collect();
    items.sort();
    let n = items.len();
    let base = n / g;
    let extra = n % g;
    let mut out = BTreeMap::new();
    let mut start = 0;
    for group in 0..g {
        let size = base + usize::from(group < extra);
        for (_, id) in &items[start..start + size] {
            out.insert(id.clone(), group + 1);
        }
        start += size;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i:03}")).collect()
    }

    fn user_with(n_train: usize) -> UserSplit {
        UserSplit {
            user_id: "alice".into(),
            train: (0..n_train).map(|i| format!("i{i:03}")).collect(),
            validation: format!("i{n_train:03}"),
            test: format!("i{:03}", n_train + 1),
        }
    }

    #[test]
    fn hundred_negatives_exclude_history() {
        let user = user_with(8);
        let cands = sample_candidates(&user, &catalog(200), 100, 3).unwrap();
        assert_eq!(cands.len(), 101);
        let history: HashSet<&String> = user.history().collect();
        let uniq: HashSet<&String> = cands.iter().collect();
        assert_eq!(uniq.len(), 101);
        let in_history: Vec<_> = cands.iter().filter(|c| history.contains(c)).collect();
        assert_eq!(in_history, vec![&user.test]);
    }

    #[test]
    fn zero_negatives_is_just_the_truth() {
        let user = user_with(3);
        assert_eq!(sample_candidates(&user, &catalog(10), 0, 1).unwrap(), vec![user.test.clone()]);
    }

    #[test]
    fn candidates_are_deterministic_and_report_shortfall() {
        let user = user_with(8);
        let a = sample_candidates(&user, &catalog(200), 50, 9).unwrap();
        let b = sample_candidates(&user, &catalog(200), 50, 9).unwrap();
        assert_eq!(a, b);
        let err = sample_candidates(&user, &catalog(15), 10, 9).unwrap_err();
        assert!(err.to_string().contains("short by 5"), "{err}");
    }

    #[test]
    fn negative_forced_when_single_choice() {
        let cat: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let hist: HashSet<&str> = ["a", "b"].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_negative(&hist, &cat, &mut rng).unwrap(), "c");
        }
        let all: HashSet<&str> = ["a", "b", "c"].into_iter().collect();
        assert!(sample_negative(&all, &cat, &mut rng).is_err());
    }

    #[test]
    fn negative_distribution_is_uniform() {
        let cat = catalog(10);
        let hist: HashSet<&str> = ["i000", "i001"].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut counts = BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(sample_negative(&hist, &cat, &mut rng).unwrap()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 8);
        let p = 1.0 / 8.0;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for (item, c) in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "{item}: {c}");
        }
    }

    fn recs_with_counts(counts: &[usize]) -> Vec<InteractionRecord> {
        let mut out = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for u in 0..c {
                out.push(InteractionRecord::new(format!("u{u}"), format!("item{i}"), 0));
            }
        }
        out
    }

    #[test]
    fn popularity_groups_split_evenly() {
        let groups = popularity_groups(&recs_with_counts(&[1; 10]), 5);
        for g in 1..=5 {
            assert_eq!(groups.values().filter(|&&x| x == g).count(), 2);
        }
        let one = popularity_groups(&recs_with_counts(&[3, 1, 2]), 1);
        assert!(one.values().all(|&g| g == 1));
    }

    #[test]
    fn popularity_groups_follow_counts() {
        let groups = popularity_groups(&recs_with_counts(&[9, 1, 5, 1]), 2);
        assert_eq!(groups["item1"], 1);
        assert_eq!(groups["item3"], 1);
        assert_eq!(groups["item2"], 2);
        assert_eq!(groups["item0"], 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn groups_balanced_and_ordered(counts in prop::collection::vec(1usize..12, 1..30), g in 1usize..7) {
                let recs = recs_with_counts(&counts);
                let groups = popularity_groups(&recs, g);
                let item_count = item_counts(&recs);
                let sizes: Vec<usize> = (1..=g).map(|k| groups.values().filter(|&&x| x == k).count()).collect();
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
                for k in 1..g {
                    let max_lo = groups.iter().filter(|(_, &x)| x == k).map(|(id, _)| item_count[id]).max();
                    let min_hi = groups.iter().filter(|(_, &x)| x == k + 1).map(|(id, _)| item_count[id]).min();
                    if let (Some(a), Some(b)) = (max_lo, min_hi) {
                        prop_assert!(b >= a);
                    }
                }
            }
        }
    }
}
