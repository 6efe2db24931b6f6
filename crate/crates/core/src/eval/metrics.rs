//! Hit@k and NDCG@k for a single relevant item.

use crate::error::{Error, Result};
use crate::reri::{top_k, RankedList};

/// 1-based rank of `truth` in a full ranking.
pub fn rank_in(ranked: &RankedList, truth: &str) -> Result<usize> {
    ranked
        .rank_of(truth)
        .ok_or_else(|| Error::invalid(format!("ground truth {truth} is not among the candidates")))
}

fn check_len(ranked: &RankedList, k: usize) -> Result<()> {
    if ranked.items.len() < k {
        return Err(Error::invalid(format!(
            "ranking has {} items, k = {k}",
            ranked.items.len()
        )));
    }
    Ok(())
}

pub fn hit_at_k(ranked: &RankedList, truth: &str, k: usize) -> Result<f64> {
    check_len(ranked, k)?;
    Ok(hit_from_rank(rank_in(ranked, truth)?, k))
}

pub fn ndcg_at_k(ranked: &RankedList, truth: &str, k: usize) -> Result<f64> {
    check_len(ranked, k)?;
    Ok(ndcg_from_rank(rank_in(ranked, truth)?, k))
}

pub fn hit_from_rank(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// `1 / log2(rank + 1)` inside the cutoff, else 0.
pub fn ndcg_from_rank(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Rank of `truth` after sorting `scores` (descending, ties by item id).
pub fn rank_of_truth(candidates: &[String], scores: &[f64], truth: &str) -> Result<usize> {
    let full = top_k(candidates, scores, candidates.len())?;
    rank_in(&full, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(n: usize) -> RankedList {
        RankedList {
            items: (0..n).map(|i| (format!("i{i:02}"), (n - i) as f64)).collect(),
        }
    }

    #[test]
    fn rank_cases() {
        let r = ranked(10);
        assert_eq!(hit_at_k(&r, "i00", 5).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&r, "i00", 5).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&r, "i02", 5).unwrap(), 0.5);
        assert_eq!(hit_at_k(&r, "i06", 5).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&r, "i06", 5).unwrap(), 0.0);
        assert_eq!(hit_at_k(&r, "i06", 10).unwrap(), 1.0);
        assert!(hit_at_k(&r, "zz", 5).is_err());
        assert!(hit_at_k(&ranked(3), "i00", 5).is_err());
    }
}
