//! Leave-one-out evaluation, group breakdowns, overlap analysis and
//! token/complexity/timing benchmarks.

pub mod bench;
pub mod metrics;
pub mod overlap;
pub mod report;
pub mod scorer;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{sample_candidates_for, UserSplit};
use crate::error::Result;

pub use bench::{
    complexity_estimate, context_budget_sweep, length_groups, timing_bench, token_histogram, BenchRow, SweepRow,
    TokenHistogram,
};
pub use metrics::{hit_at_k, ndcg_at_k, ndcg_from_rank, rank_of_truth};
pub use overlap::{overlap_report, OverlapStats};
pub use scorer::{scorers, ScoreRequest, Scorer, ScorerEnv, ScorerFactory, ScorerRegistry};

pub const DEFAULT_KS: [usize; 2] = [5, 10];
pub const DEFAULT_NEGATIVES: usize = 100;

/// Which held-out item is the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// History = train prefix, truth = validation item.
    Validation,
    /// History = train prefix plus validation item, truth = test item.
    Test,
}

impl Target {
    pub fn prefix_and_truth(self, u: &UserSplit) -> (Vec<String>, &str) {
        match self {
            Target::Validation => (u.train.clone(), u.validation.as_str()),
            Target::Test => (u.test_prefix(), u.test.as_str()),
        }
    }

    /// Candidate seed; validation and test draws differ.
    pub fn candidate_seed(self, seed: u64) -> u64 {
        match self {
            Target::Validation => seed ^ 0x7661_6c69_6461_7465,
            Target::Test => seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserResult {
    pub user_id: String,
    pub truth: String,
    pub rank: usize,
    pub candidates: Vec<String>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub hit: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_users: usize,
    pub meta: BTreeMap<String, String>,
    #[serde(skip)]
    pub users: Vec<UserResult>,
}

impl MetricsReport {
    pub fn from_users(users: Vec<UserResult>, ks: &[usize]) -> Self {
        let n = users.len().max(1) as f64;
        let hit = ks
            .iter()
            .map(|&k| users.iter().map(|u| metrics::hit_from_rank(u.rank, k)).sum::<f64>() / n)
            .collect();
        let ndcg = ks
            .iter()
            .map(|&k| users.iter().map(|u| ndcg_from_rank(u.rank, k)).sum::<f64>() / n)
            .collect();
        Self {
            ks: ks.to_vec(),
            hit,
            ndcg,
            n_users: users.len(),
            meta: BTreeMap::new(),
            users,
        }
    }

    pub fn hit_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.hit[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }
}

/// Scores a fixed candidate set per user and reduces to mean metrics. Users
/// are processed in parallel and reported in input order.
pub fn evaluate(
    scorer: &dyn Scorer,
    users: &[UserSplit],
    catalog: &[String],
    target: Target,
    ks: &[usize],
    n_negatives: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let results = users
        .par_iter()
        .map(|u| {
            let (prefix, truth) = target.prefix_and_truth(u);
            let candidates = sample_candidates_for(u, truth, catalog, n_negatives, target.candidate_seed(seed))?;
            let scores = scorer.score(&ScoreRequest {
                user: u,
                prefix: &prefix,
                truth,
                candidates: &candidates,
            })?;
            let rank = rank_of_truth(&candidates, &scores, truth)?;
            Ok(UserResult {
                user_id: u.user_id.clone(),
                truth: truth.to_string(),
                rank,
                candidates,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricsReport::from_users(results, ks);
    report.meta.insert("scorer".into(), scorer.name().to_string());
    report.meta.insert("seed".into(), seed.to_string());
    report.meta.insert("negatives".into(), n_negatives.to_string());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub group: usize,
    pub n_users: usize,
    pub hit: Vec<f64>,
    pub ndcg: Vec<f64>,
}

/// Per-group metrics from an existing report's per-user ranks. `group_of`
/// maps a user result to its group; groups with no users are omitted.
pub fn group_eval(
    report: &MetricsReport,
    group_of: &dyn Fn(&UserResult) -> Option<usize>,
) -> Vec<GroupMetrics> {
    let mut buckets: BTreeMap<usize, Vec<UserResult>> = BTreeMap::new();
    for u in &report.users {
        if let Some(g) = group_of(u) {
            buckets.entry(g).or_default().push(u.clone());
        }
    }
    buckets
        .into_iter()
        .map(|(group, users)| {
            let r = MetricsReport::from_users(users, &report.ks);
            GroupMetrics {
                group,
                n_users: r.n_users,
                hit: r.hit,
                ndcg: r.ndcg,
            }
        })
        .collect()
}

/// Group by the popularity group of each user's ground-truth item.
pub fn by_item_group(groups: &BTreeMap<String, usize>) -> impl Fn(&UserResult) -> Option<usize> + '_ {
    move |u| groups.get(&u.truth).copied()
}

/// Group by a per-user label (for example a sequence-length bucket).
pub fn by_user_group(groups: &BTreeMap<String, usize>) -> impl Fn(&UserResult) -> Option<usize> + '_ {
    move |u| groups.get(&u.user_id).copied()
}
