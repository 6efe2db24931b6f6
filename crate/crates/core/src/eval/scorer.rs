//! Candidate scorers selectable by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use crate::data::{user_rng, InteractionRecord, UserSplit};
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::reri::Recommender;

/// One user's scoring request.
pub struct ScoreRequest<'r> {
    pub user: &'r UserSplit,
    pub prefix: &'r [String],
    pub truth: &'r str,
    pub candidates: &'r [String],
}

pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, req: &ScoreRequest<'_>) -> Result<Vec<f64>>;
}

/// What a scorer may be built from.
pub struct ScorerEnv<'a> {
    pub recommender: Option<Recommender<'a>>,
    pub records: &'a [InteractionRecord],
    pub seed: u64,
}

pub trait ScorerFactory: Send + Sync {
    fn build<'a>(&self, env: &ScorerEnv<'a>) -> Result<Box<dyn Scorer + 'a>>;
}

pub type ScorerRegistry = Registry<dyn ScorerFactory>;

pub struct ModelScorer<'a>(pub Recommender<'a>);

impl Scorer for ModelScorer<'_> {
    fn name(&self) -> &str {
        "model"
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<Vec<f64>> {
        self.0.score(req.prefix, req.candidates)
    }
}

/// Independent uniform scores per (user, seed).
pub struct RandomScorer {
    pub seed: u64,
}

impl Scorer for RandomScorer {
    fn name(&self) -> &str {
        "random"
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<Vec<f64>> {
        let mut rng = user_rng(&req.user.user_id, self.seed ^ 0x5eed_0f_5c0e);
        Ok(req.candidates.iter().map(|_| rng.gen::<f64>()).collect())
    }
}

/// 1 for the ground truth, 0 elsewhere.
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<Vec<f64>> {
        Ok(req
            .candidates
            .iter()
            .map(|c| if c == req.truth { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Interaction count in the training records.
pub struct PopularityScorer {
    pub counts: BTreeMap<String, usize>,
}

impl Scorer for PopularityScorer {
    fn name(&self) -> &str {
        "popularity"
    }

    fn score(&self, req: &ScoreRequest<'_>) -> Result<Vec<f64>> {
        Ok(req
            .candidates
            .iter()
            .map(|c| self.counts.get(c).copied().unwrap_or(0) as f64)
            .collect())
    }
}

struct ModelFactory;
struct RandomFactory;
struct OracleFactory;
struct PopularityFactory;

impl ScorerFactory for ModelFactory {
    fn build<'a>(&self, env: &ScorerEnv<'a>) -> Result<Box<dyn Scorer + 'a>> {
        let rec = env
            .recommender
            .ok_or_else(|| Error::Config("the model scorer needs a checkpoint".into()))?;
        Ok(Box::new(ModelScorer(rec)))
    }
}

impl ScorerFactory for RandomFactory {
    fn build<'a>(&self, env: &ScorerEnv<'a>) -> Result<Box<dyn Scorer + 'a>> {
        Ok(Box::new(RandomScorer { seed: env.seed }))
    }
}

impl ScorerFactory for OracleFactory {
    fn build<'a>(&self, _env: &ScorerEnv<'a>) -> Result<Box<dyn Scorer + 'a>> {
        Ok(Box::new(OracleScorer))
    }
}

impl ScorerFactory for PopularityFactory {
    fn build<'a>(&self, env: &ScorerEnv<'a>) -> Result<Box<dyn Scorer + 'a>> {
        Ok(Box::new(PopularityScorer {
            counts: crate::data::sampling::item_counts(env.records),
        }))
    }
}

/// Built-in scorers: model, random, oracle, popularity.
pub fn scorers() -> ScorerRegistry {
    let mut r = ScorerRegistry::new("scorer");
    r.register("model", Arc::new(ModelFactory))
        .register("random", Arc::new(RandomFactory))
        .register("oracle", Arc::new(OracleFactory))
        .register("popularity", Arc::new(PopularityFactory));
    r
}
