//! Alignment objective: predict a property of the next item from the
//! history prompt, supervising the adaptor (and the backbone when trainable).

use rand::Rng;

use crate::data::{FeatureStore, UserSplit};
use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::model::{Bound, Model};
use crate::nn::params::Trainable;
use crate::prompt::{Prompter, RisaExample, RisaTemplateSet};

/// A history prefix and the item that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NextItem {
    pub user_id: String,
    pub prefix: Vec<String>,
    pub next: String,
}

/// The last training item as target, the rest of the train prefix as history.
/// Users with a single training item have no pair.
pub fn risa_pairs(users: &[UserSplit]) -> Vec<NextItem> {
    users
        .iter()
        .filter(|u| u.train.len() >= 2)
        .map(|u| {
            let n = u.train.len();
            NextItem {
                user_id: u.user_id.clone(),
                prefix: u.train[..n - 1].to_vec(),
                next: u.train[n - 1].clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RisaBatch {
    pub examples: Vec<RisaExample>,
}

impl RisaBatch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// `size` examples drawn uniformly with replacement from `pairs`, each with
/// its own template.
pub fn make_batch<R: Rng + ?Sized>(
    prompter: &Prompter<'_>,
    templates: &RisaTemplateSet,
    pairs: &[NextItem],
    budget: Option<usize>,
    rng: &mut R,
    size: usize,
) -> Result<RisaBatch> {
    if pairs.is_empty() {
        return Err(Error::invalid("no users with a next training item"));
    }
    let mut examples = Vec::with_capacity(size);
    for _ in 0..size {
        let p = &pairs[rng.gen_range(0..pairs.len())];
        examples.push(prompter.build_risa_pair(templates, &p.prefix, &p.next, budget, rng)?);
    }
    Ok(RisaBatch { examples })
}

/// Mean over examples of the masked next-token loss.
pub fn risa_loss_var<'a>(
    b: &Bound<'a>,
    g: &mut Graph<'a>,
    batch: &RisaBatch,
    store: &FeatureStore,
    fallback: bool,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::invalid("empty alignment batch"));
    }
    let terms = batch
        .examples
        .iter()
        .map(|e| b.lm_loss(g, &e.plan, store, fallback))
        .collect::<Result<Vec<_>>>()?;
    let total = g.sum(terms);
    Ok(g.scale(total, 1.0 / batch.len() as f64))
}

pub fn risa_loss(model: &Model, batch: &RisaBatch, store: &FeatureStore, fallback: bool) -> Result<f64> {
    let b = model.bind(Trainable::none());
    let mut g = Graph::new();
    let l = risa_loss_var(&b, &mut g, batch, store, fallback)?;
    Ok(g.scalar(l))
}
