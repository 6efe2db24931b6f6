//! Retrieval head: `[REC]` user vectors, per-type projections, dot-product
//! affinity, the pairwise logistic loss and top-k ranking.

use std::cmp::Ordering;

use crate::data::{FeatureStore, FeatureType};
use crate::error::{Error, Result};
use crate::nn::graph::{softplus, Graph, Var};
use crate::nn::mat::{dot, Mat};
use crate::nn::model::{feature_row, Bound, Model};
use crate::nn::params::Trainable;
use crate::prompt::{PromptPlan, Prompter};

pub fn affinity(o_u: &[f64], o_i: &[f64]) -> Result<f64> {
    if o_u.len() != o_i.len() {
        return Err(Error::DimensionMismatch {
            expected: o_u.len(),
            actual: o_i.len(),
        });
    }
    Ok(dot(o_u, o_i))
}

/// `-ln σ(r_pos) - ln(1 - σ(r_neg))`.
pub fn pair_loss(r_pos: f64, r_neg: f64) -> f64 {
    softplus(-r_pos) + softplus(r_neg)
}

/// Item feature rows as a matrix, one row per item.
pub fn item_features(
    store: &FeatureStore,
    kind: FeatureType,
    items: &[&str],
    fallback: bool,
) -> Result<Mat> {
    let dim = store.require(kind)?.dim();
    let mut data = Vec::with_capacity(items.len() * dim);
    for id in items {
        data.extend(feature_row(store, kind, id, fallback)?.iter().map(|&v| v as f64));
    }
    Ok(Mat::from_vec(items.len(), dim, data))
}

/// Per-type loss nodes for one (user, positive, negative) triple given the
/// user's `h([REC])` node.
pub fn reri_terms<'a>(
    b: &Bound<'a>,
    g: &mut Graph<'a>,
    h: Var,
    pos: &str,
    neg: &str,
    types: &[FeatureType],
    store: &FeatureStore,
    fallback: bool,
) -> Result<Vec<(FeatureType, Var)>> {
    let mut out = Vec::with_capacity(types.len());
    for &t in types {
        let o_u = b.project_user(g, h, t)?;
        let feats = g.constant(item_features(store, t, &[pos, neg], fallback)?);
        let o_i = b.project_items(g, feats, t)?;
        let r = g.matmul_t(o_u, o_i);
        let r_pos = g.slice_cols(r, 0, 1);
        let r_pos = g.scale(r_pos, -1.0);
        let r_neg = g.slice_cols(r, 1, 1);
        let l_pos = g.softplus(r_pos);
        let l_neg = g.softplus(r_neg);
        out.push((t, g.sum(vec![l_pos, l_neg])));
    }
    Ok(out)
}

/// Loss value for one triple, summed over the active types.
#[allow(clippy::too_many_arguments)]
pub fn reri_loss(
    model: &Model,
    rec_plan: &PromptPlan,
    pos: &str,
    neg: &str,
    types: &[FeatureType],
    store: &FeatureStore,
    fallback: bool,
) -> Result<f64> {
    let b = model.bind(Trainable::none());
    let mut g = Graph::new();
    let h = b.user_repr(&mut g, rec_plan, store, fallback)?;
    let terms = reri_terms(&b, &mut g, h, pos, neg, types, store, fallback)?;
    Ok(terms.iter().map(|(_, v)| g.scalar(*v)).sum())
}

/// `h([REC])` for the user's prefix.
pub fn user_repr(
    model: &Model,
    prompter: &Prompter<'_>,
    prefix: &[String],
    budget: Option<usize>,
    store: &FeatureStore,
    fallback: bool,
) -> Result<Vec<f64>> {
    let plan = prompter.build_rec_plan(prefix, budget)?;
    model.user_repr(&plan, store, fallback)
}

/// Per-type affinity of every candidate, `[type][candidate]`.
pub fn type_scores(
    model: &Model,
    h: &[f64],
    candidates: &[String],
    types: &[FeatureType],
    store: &FeatureStore,
    fallback: bool,
) -> Result<Vec<Vec<f64>>> {
    let ids: Vec<&str> = candidates.iter().map(String::as_str).collect();
    types
        .iter()
        .map(|&t| {
            let o_u = model.project_user(h, t)?;
            let o_i = model.project_items(item_features(store, t, &ids, fallback)?, t)?;
            (0..o_i.rows()).map(|r| affinity(&o_u, o_i.row(r))).collect()
        })
        .collect()
}

/// Sum over the active types of each candidate's affinity.
pub fn score_candidates(
    model: &Model,
    h: &[f64],
    candidates: &[String],
    types: &[FeatureType],
    store: &FeatureStore,
    fallback: bool,
) -> Result<Vec<f64>> {
    if types.is_empty() {
        return Err(Error::Config("no active feature types".into()));
    }
    let per_type = type_scores(model, h, candidates, types, store, fallback)?;
    let mut total = per_type[0].clone();
    for s in &per_type[1..] {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|(id, _)| id.as_str()).collect()
    }

    /// 1-based rank of `item`, if present.
    pub fn rank_of(&self, item: &str) -> Option<usize> {
        self.items.iter().position(|(id, _)| id == item).map(|p| p + 1)
    }
}

/// Descending score, ties by ascending item id.
pub fn ranking_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0))
}

pub fn top_k(items: &[String], scores: &[f64], k: usize) -> Result<RankedList> {
    if items.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: items.len(),
            actual: scores.len(),
        });
    }
    if k > items.len() {
        return Err(Error::invalid(format!("k = {k} exceeds {} candidates", items.len())));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score for {}", items[i])));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| ranking_order((&items[a], scores[a]), (&items[b], scores[b])));
    Ok(RankedList {
        items: order[..k].iter().map(|&i| (items[i].clone(), scores[i])).collect(),
    })
}


/// Everything needed to score candidates for a user prefix.
#[derive(Clone, Copy)]
pub struct Recommender<'a> {
    pub model: &'a Model,
    pub prompter: Prompter<'a>,
    pub store: &'a FeatureStore,
    pub types: &'a [FeatureType],
    pub fallback: bool,
    pub budget: Option<usize>,
}

impl<'a> Recommender<'a> {
    pub fn user_repr(&self, prefix: &[String]) -> Result<Vec<f64>> {
        user_repr(self.model, &self.prompter, prefix, self.budget, self.store, self.fallback)
    }

    pub fn score(&self, prefix: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        let h = self.user_repr(prefix)?;
        score_candidates(self.model, &h, candidates, self.types, self.store, self.fallback)
    }

    pub fn recommend(&self, prefix: &[String], candidates: &[String], k: usize) -> Result<RankedList> {
        let scores = self.score(prefix, candidates)?;
        top_k(candidates, &scores, k)
    }
}
