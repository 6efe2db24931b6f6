//! k-core filtering, chronological user sequences and the leave-one-out split.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::data::records::InteractionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user_id: String,
    pub items: Vec<String>,
}

/// Keeps the maximal subset of `records` in which every user and every item
/// has at least `k` interactions. Removal is iterated to a fixpoint.
pub fn k_core_filter(records: &[InteractionRecord], k: usize) -> Vec<InteractionRecord> {
    let k = k.max(1);
    let mut alive: Vec<bool> = vec![true; records.len()];
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (r, _) in records.iter().zip(&alive).filter(|(_, a)| **a) {
            *user_deg.entry(&r.user_id).or_default() += 1;
            *item_deg.entry(&r.item_id).or_default() += 1;
        }
        let mut changed = false;
        for (r, a) in records.iter().zip(alive.iter_mut()) {
            if *a && (user_deg[r.user_id.as_str()] < k || item_deg[r.item_id.as_str()] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    records
        .iter()
        .zip(&alive)
        .filter(|(_, a)| **a)
        .map(|(r, _)| r.clone())
        .collect()
}

/// One sequence per user ordered by `(timestamp, item_id)`; exact duplicate
/// triples collapse to one event. Users come out in ascending id order.
pub fn build_sequences(records: &[InteractionRecord]) -> Vec<UserSequence> {
    let mut per_user: BTreeMap<&str, Vec<(u64, &str)>> = BTreeMap::new();
    let mut seen: HashSet<(&str, &str, u64)> = HashSet::new();
    for r in records {
        if seen.insert((&r.user_id, &r.item_id, r.timestamp)) {
            per_user
                .entry(&r.user_id)
                .or_default()
                .push((r.timestamp, &r.item_id));
        }
    }
    per_user
        .into_iter()
        .map(|(user, mut events)| {
            events.sort_unstable();
            UserSequence {
                user_id: user.to_string(),
                items: events.into_iter().map(|(_, i)| i.to_string()).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSplit {
    pub user_id: String,
    pub train: Vec<String>,
    pub validation: String,
    pub test: String,
}

impl UserSplit {
    /// Every item the user touched, across all three parts.
    pub fn history(&self) -> impl Iterator<Item = &String> {
        self.train
            .iter()
            .chain(std::iter::once(&self.validation))
            .chain(std::iter::once(&self.test))
    }

    /// History used to predict the test item: train prefix plus validation item.
    pub fn test_prefix(&self) -> Vec<String> {
        let mut p = self.train.clone();
        p.push(self.validation.clone());
        p
    }

    pub fn len(&self) -> usize {
        self.train.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub users: Vec<UserSplit>,
}

impl DatasetSplit {
    pub fn get(&self, user_id: &str) -> Option<&UserSplit> {
        self.users.iter().find(|u| u.user_id == user_id)
    }
}

/// Last item to test, second-to-last to validation, the remainder to train.
pub fn leave_one_out(sequences: &[UserSequence]) -> Result<DatasetSplit> {
    let mut users = Vec::with_capacity(sequences.len());
    for s in sequences {
        let n = s.items.len();
        if n < 3 {
            return Err(Error::invalid(format!(
                "user {} has {} interactions; leave-one-out needs at least 3",
                s.user_id, n
            )));
        }
        users.push(UserSplit {
            user_id: s.user_id.clone(),
            train: s.items[..n - 2].to_vec(),
            validation: s.items[n - 2].clone(),
            test: s.items[n - 1].clone(),
        });
    }
    Ok(DatasetSplit { users })
}
