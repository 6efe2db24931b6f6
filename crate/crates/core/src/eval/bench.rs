//! Token histograms, the attention-cost proxy, timing by sequence-length
//! group and the context-budget sweep.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::UserSplit;
use crate::error::Result;
use crate::eval::scorer::ModelScorer;
use crate::eval::{evaluate, Target};
use crate::prompt::Prompter;
use crate::reri::Recommender;

pub const DEFAULT_LENGTH_BOUNDARIES: [usize; 4] = [3, 8, 12, 16];
pub const HISTOGRAM_BIN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenHistogram {
    pub mode: String,
    /// `(user_id, prompt length)` in input order.
    pub per_user: Vec<(String, usize)>,
    /// `(bin_start, count)` at [`HISTOGRAM_BIN`]-token bins.
    pub histogram: Vec<(usize, usize)>,
}

impl TokenHistogram {
    pub fn mean(&self) -> f64 {
        if self.per_user.is_empty() {
            return 0.0;
        }
        self.per_user.iter().map(|(_, l)| *l as f64).sum::<f64>() / self.per_user.len() as f64
    }
}

/// Unlimited-budget history prompt length per user, over the history that
/// precedes the test item.
pub fn token_histogram(users: &[UserSplit], prompter: &Prompter<'_>) -> Result<TokenHistogram> {
    let mut per_user = Vec::with_capacity(users.len());
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for u in users {
        let len = prompter.build_history_prompt(&u.test_prefix(), None)?.len();
        *bins.entry(len / HISTOGRAM_BIN * HISTOGRAM_BIN).or_default() += 1;
        per_user.push((u.user_id.clone(), len));
    }
    Ok(TokenHistogram {
        mode: prompter.repr.name().to_string(),
        per_user,
        histogram: bins.into_iter().collect(),
    })
}

/// `(per_item_tokens * seq_len)^2 * d`.
pub fn complexity_estimate(seq_len: usize, d: usize, per_item_tokens: usize) -> f64 {
    let n = (per_item_tokens * seq_len) as f64;
    n * n * d as f64
}

/// Group index per user: group `i` holds `|S_u|` in `[b[i], b[i+1])`, the
/// last group is open-ended; users shorter than `b[0]` are left out.
pub fn length_groups(users: &[UserSplit], boundaries: &[usize]) -> BTreeMap<String, usize> {
    users
        .iter()
        .filter_map(|u| {
            let n = u.len();
            boundaries
                .iter()
                .rposition(|&b| n >= b)
                .map(|g| (u.user_id.clone(), g))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: String,
    pub group: usize,
    pub group_start: usize,
    pub n_users: usize,
    pub token_total: usize,
    pub seconds: f64,
}

/// Per length group, up to `group_size` seeded users; per mode, the total
/// recommendation-prompt tokens and the wall time to score the full catalog.
pub fn timing_bench(
    recommenders: &[Recommender<'_>],
    users: &[UserSplit],
    boundaries: &[usize],
    group_size: usize,
    catalog: &[String],
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let groups = length_groups(users, boundaries);
    let mut members: BTreeMap<usize, Vec<&UserSplit>> = BTreeMap::new();
    for u in users {
        if let Some(&g) = groups.get(&u.user_id) {
            members.entry(g).or_default().push(u);
        }
    }
    let mut rows = Vec::new();
    for (g, mut list) in members {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ g as u64);
        list.shuffle(&mut rng);
        list.truncate(group_size);
        list.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        for rec in recommenders {
            let mut tokens = 0;
            let start = Instant::now();
            for u in &list {
                let prefix = u.test_prefix();
                tokens += rec.prompter.build_rec_plan(&prefix, rec.budget)?.len();
                rec.score(&prefix, catalog)?;
            }
            rows.push(BenchRow {
                mode: rec.prompter.repr.name().to_string(),
                group: g,
                group_start: boundaries[g],
                n_users: list.len(),
                token_total: tokens,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: String,
    /// `None` is the unlimited budget.
    pub budget: Option<usize>,
    pub hit: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub mean_retained: f64,
    pub max_retained: usize,
}

/// Test-set evaluation of each recommender at each context budget.
pub fn context_budget_sweep(
    recommenders: &[Recommender<'_>],
    budgets: &[Option<usize>],
    users: &[UserSplit],
    catalog: &[String],
    ks: &[usize],
    n_negatives: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for rec in recommenders {
        for &budget in budgets {
            let r = Recommender { budget, ..*rec };
            let mut retained = Vec::with_capacity(users.len());
            for u in users {
                retained.push(r.prompter.build_rec_plan(&u.test_prefix(), budget)?.items_retained);
            }
            let report = evaluate(&ModelScorer(r), users, catalog, Target::Test, ks, n_negatives, seed)?;
            rows.push(SweepRow {
                mode: r.prompter.repr.name().to_string(),
                budget,
                hit: report.hit,
                ndcg: report.ndcg,
                mean_retained: retained.iter().sum::<usize>() as f64 / retained.len().max(1) as f64,
                max_retained: retained.iter().copied().max().unwrap_or(0),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complexity_values() {
        assert_eq!(complexity_estimate(10, 2560, 1), 256_000.0);
        assert_eq!(complexity_estimate(10, 2560, 160), 6_553_600_000.0);
        assert_eq!(complexity_estimate(0, 2560, 160), 0.0);
    }

    #[test]
    fn length_group_edges() {
        let mk = |id: &str, n: usize| UserSplit {
            user_id: id.into(),
            train: vec!["x".into(); n - 2],
            validation: "v".into(),
            test: "t".into(),
        };
        let g = length_groups(&[mk("a", 3), mk("b", 8), mk("c", 20), mk("d", 7)], &[3, 8, 12]);
        assert_eq!(g["a"], 0);
        assert_eq!(g["b"], 1);
        assert_eq!(g["c"], 2);
        assert_eq!(g["d"], 0);
    }
}
