//! Combined objective, Adam, freeze policy, early stopping and resumable
//! training state.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{sample_negative, stable_hash, Dataset, FeatureStore, FeatureType};
use crate::error::{Error, Result};
use crate::eval::scorer::ModelScorer;
use crate::eval::{evaluate, Target};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::graph::Graph;
use crate::nn::mat::Mat;
use crate::nn::model::{Model, ModelConfig};
use crate::nn::params::{Group, Trainable};
use crate::prompt::{
    representations, vocabulary_for, ItemRepresentation, PromptPlan, Prompter, RisaTemplateSet, Vocabulary,
};
use crate::reri::{reri_terms, Recommender};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
const PRETRAIN_TOKENS: usize = 64;

/// Which next-item positions of each training prefix become examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cuts {
    /// Every position `c >= 1` of the train prefix, with `train[..c]` as history.
    All,
    /// Only the last training item, with the rest of the prefix as history.
    Last,
}

impl std::str::FromStr for Cuts {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Cuts::All),
            "last" => Ok(Cuts::Last),
            _ => Err(Error::Config(format!("unknown cuts policy {s:?} (all, last)"))),
        }
    }
}

impl std::fmt::Display for Cuts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cuts::All => "all",
            Cuts::Last => "last",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub types: Vec<FeatureType>,
    pub mode: String,
    pub backbone_trainable: bool,
    pub patience: usize,
    pub fallback: bool,
    pub budget: Option<usize>,
    pub two_stage: bool,
    pub stage1_epochs: usize,
    pub lm_pretrain_epochs: usize,
    pub cuts: Cuts,
    pub val_negatives: usize,
    pub max_vocab: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 32,
            epochs: 5,
            seed: 7,
            types: vec![FeatureType::Img],
            mode: "image".into(),
            backbone_trainable: true,
            patience: 3,
            fallback: false,
            budget: None,
            two_stage: false,
            stage1_epochs: 2,
            lm_pretrain_epochs: 0,
            cuts: Cuts::All,
            val_negatives: 100,
            max_vocab: 4096,
        }
    }
}

fn types_string(types: &[FeatureType]) -> String {
    types.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.types.is_empty() {
            return Err(Error::Config("at least one feature type must be active".into()));
        }
        if self.types.contains(&FeatureType::JointText) {
            return Err(Error::Config("jointtext is not a retrieval type".into()));
        }
        representations().get(&self.mode)?;
        Ok(())
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        [
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("types", types_string(&self.types)),
            ("mode", self.mode.clone()),
            ("backbone_trainable", self.backbone_trainable.to_string()),
            ("patience", self.patience.to_string()),
            ("fallback", self.fallback.to_string()),
            ("budget", self.budget.map_or("none".into(), |b| b.to_string())),
            ("two_stage", self.two_stage.to_string()),
            ("stage1_epochs", self.stage1_epochs.to_string()),
            ("lm_pretrain_epochs", self.lm_pretrain_epochs.to_string()),
            ("cuts", self.cuts.to_string()),
            ("val_negatives", self.val_negatives.to_string()),
            ("max_vocab", self.max_vocab.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("train.{k}"), v))
        .collect()
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let k = |s: &str| format!("train.{s}");
        let budget = match c.get(&k("budget"))? {
            "none" => None,
            b => Some(
                b.parse()
                    .map_err(|_| Error::Config(format!("bad budget {b:?} in checkpoint")))?,
            ),
        };
        Ok(Self {
            lr: c.parse(&k("lr"))?,
            batch_size: c.parse(&k("batch_size"))?,
            epochs: c.parse(&k("epochs"))?,
            seed: c.parse(&k("seed"))?,
            types: crate::data::features::parse_feature_types(c.get(&k("types"))?)?,
            mode: c.get(&k("mode"))?.to_string(),
            backbone_trainable: c.parse(&k("backbone_trainable"))?,
            patience: c.parse(&k("patience"))?,
            fallback: c.parse(&k("fallback"))?,
            budget,
            two_stage: c.parse(&k("two_stage"))?,
            stage1_epochs: c.parse(&k("stage1_epochs"))?,
            lm_pretrain_epochs: c.parse(&k("lm_pretrain_epochs"))?,
            cuts: c.get(&k("cuts"))?.parse()?,
            val_negatives: c.parse(&k("val_negatives"))?,
            max_vocab: c.parse(&k("max_vocab"))?,
        })
    }
}

/// Bias-corrected Adam. Updates the moments in place and returns the step to
/// subtract from the parameters. `t` is the 1-based update count.
pub fn optimizer_update(m: &mut [f64], v: &mut [f64], g: &[f64], t: u64, lr: f64) -> Vec<f64> {
    let c1 = 1.0 - BETA1.powi(t as i32);
    let c2 = 1.0 - BETA2.powi(t as i32);
    m.iter_mut()
        .zip(v.iter_mut())
        .zip(g)
        .map(|((m, v), &g)| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS)
        })
        .collect()
}

/// Parameters and optimizer moments at a step boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub model: Model,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl TrainState {
    pub fn new(model: Model) -> Self {
        let zeros = |m: &Model| -> Vec<Mat> {
            m.params
                .iter()
                .map(|p| Mat::zeros(p.value.rows(), p.value.cols()))
                .collect()
        };
        Self {
            step: 0,
            m: zeros(&model),
            v: zeros(&model),
            model,
        }
    }

    pub fn to_checkpoint(&self, cfg: &TrainConfig, vocab: &Vocabulary) -> Checkpoint {
        let mut c = training_checkpoint(&self.model, cfg, vocab);
        c.config.insert("state.step".into(), self.step.to_string());
        for (i, p) in self.model.params.iter().enumerate() {
            c.tensors.push((format!("adam.m.{}", p.name), self.m[i].clone()));
            c.tensors.push((format!("adam.v.{}", p.name), self.v[i].clone()));
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let model = Model::from_checkpoint(c)?;
        let mut st = TrainState::new(model);
        st.step = c.parse("state.step")?;
        for i in 0..st.model.params.len() {
            let name = st.model.params.get(i).name.clone();
            for (which, dst) in [("m", &mut st.m[i]), ("v", &mut st.v[i])] {
                let t = c
                    .tensor(&format!("adam.{which}.{name}"))
                    .ok_or_else(|| Error::Config(format!("checkpoint lacks adam.{which}.{name}")))?;
                if t.shape() != dst.shape() {
                    return Err(Error::Config(format!("adam.{which}.{name} has the wrong shape")));
                }
                *dst = t.clone();
            }
        }
        Ok(st)
    }
}

/// Model checkpoint annotated with the training configuration and the
/// vocabulary fingerprint.
pub fn training_checkpoint(model: &Model, cfg: &TrainConfig, vocab: &Vocabulary) -> Checkpoint {
    let mut c = model.to_checkpoint();
    c.config.extend(cfg.to_kv());
    c.config.insert("vocab.fingerprint".into(), vocab.fingerprint().to_string());
    c.config.insert("vocab.size".into(), vocab.len().to_string());
    c
}

/// Losses of one optimizer step, each a batch mean.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub l_final: f64,
    pub l_risa: Option<f64>,
    pub l_reri: BTreeMap<FeatureType, f64>,
    pub wall_ms: f64,
}

impl StepLog {
    pub const HEADER: [&'static str; 7] =
        ["step", "L_final", "L_RISA", "L_RERI_Img", "L_RERI_CF", "L_RERI_Text", "wall_ms"];

    pub fn csv_row(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        vec![
            self.step.to_string(),
            self.l_final.to_string(),
            opt(self.l_risa),
            opt(self.l_reri.get(&FeatureType::Img).copied()),
            opt(self.l_reri.get(&FeatureType::Cf).copied()),
            opt(self.l_reri.get(&FeatureType::Text).copied()),
            format!("{:.3}", self.wall_ms),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// Completed epochs at the time of validation; 0 is the initialization.
    pub epoch: usize,
    pub val_hit5: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Model,
    pub best_val_hit5: Option<f64>,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
    pub stopped_early: bool,
    pub final_state: TrainState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Joint,
    AlignOnly,
    RetrieveOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Example {
    user: usize,
    cut: usize,
}

pub struct Trainer<'a> {
    pub dataset: &'a Dataset,
    pub store: &'a FeatureStore,
    pub templates: &'a RisaTemplateSet,
    pub vocab: Vocabulary,
    pub repr: Arc<dyn ItemRepresentation>,
    pub model_config: ModelConfig,
    pub config: TrainConfig,
    catalog_ids: Vec<String>,
    examples: Vec<Example>,
}

impl<'a> Trainer<'a> {
    /// Checks that every active feature type is present, builds the
    /// vocabulary and fixes the model dimensions from the data.
    pub fn new(
        dataset: &'a Dataset,
        store: &'a FeatureStore,
        templates: &'a RisaTemplateSet,
        mut model_config: ModelConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let repr = representations().get(&config.mode)?;
        let mut item_dims = Vec::new();
        for &t in &config.types {
            item_dims.push((t, store.require(t)?.dim()));
        }
        if repr.uses_visual() {
            let img = store.require(FeatureType::Img)?;
            model_config.d_visual = img.dim();
            if config.fallback {
                store.require(FeatureType::JointText)?;
            }
        } else if let Some(d) = store.dim(FeatureType::Img).or(store.dim(FeatureType::JointText)) {
            model_config.d_visual = d;
        }
        let vocab = vocabulary_for(&dataset.catalog, templates, config.max_vocab);
        model_config.backbone.vocab_size = vocab.len();
        model_config.backbone.trainable = config.backbone_trainable;
        model_config.item_dims = item_dims;
        model_config.seed = config.seed;
        model_config.validate()?;
        let mut examples = Vec::new();
        for (ui, u) in dataset.split.users.iter().enumerate() {
            let n = u.train.len();
            match config.cuts {
                Cuts::All => examples.extend((1..n).map(|cut| Example { user: ui, cut })),
                Cuts::Last if n >= 2 => examples.push(Example { user: ui, cut: n - 1 }),
                Cuts::Last => {}
            }
        }
        if examples.is_empty() {
            return Err(Error::invalid("no user has two or more training items"));
        }
        Ok(Self {
            dataset,
            store,
            templates,
            vocab,
            repr,
            model_config,
            config,
            catalog_ids: dataset.catalog.ids(),
            examples,
        })
    }

    pub fn prompter(&self) -> Prompter<'_> {
        Prompter::new(&self.vocab, &self.dataset.catalog, self.repr.as_ref())
    }

    pub fn recommender<'m>(&'m self, model: &'m Model) -> Recommender<'m> {
        Recommender {
            model,
            prompter: self.prompter(),
            store: self.store,
            types: &self.config.types,
            fallback: self.config.fallback,
            budget: self.config.budget,
        }
    }

    pub fn n_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.examples.len().div_ceil(self.config.batch_size)
    }

    fn phase(&self, epoch: usize) -> Phase {
        if !self.config.two_stage {
            Phase::Joint
        } else if epoch < self.config.stage1_epochs {
            Phase::AlignOnly
        } else {
            Phase::RetrieveOnly
        }
    }

    fn trainable(&self, phase: Phase) -> Trainable {
        let mut t = Trainable {
            backbone: self.config.backbone_trainable,
            ..Trainable::all()
        };
        if phase == Phase::RetrieveOnly {
            t.adaptor = false;
        }
        t
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        let seed = stable_hash(&[b"order", &self.config.seed.to_le_bytes(), &(epoch as u64).to_le_bytes()]);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    /// Initial model, after the optional language-model pass when the
    /// backbone is frozen for the main run.
    pub fn init_state(&self) -> Result<TrainState> {
        let mut model = Model::init(self.model_config.clone())?;
        if self.config.lm_pretrain_epochs > 0 {
            self.lm_pretrain(&mut model)?;
        }
        Ok(TrainState::new(model))
    }

    fn pretrain_plan(&self, item: &crate::data::ItemRecord) -> PromptPlan {
        let text = format!(
            "Title: {}, Brand: {}, Category: {}, Description: {}",
            item.title, item.brand, item.category, item.description
        );
        let mut ids = self.vocab.tokenize(&text);
        ids.truncate(PRETRAIN_TOKENS);
        let mut mask = vec![true; ids.len()];
        mask[0] = false;
        PromptPlan {
            ids,
            slots: Vec::new(),
            target_mask: mask,
            mode: "pretrain",
            items_retained: 0,
        }
    }

    /// Next-token training of the backbone alone on the catalog text.
    fn lm_pretrain(&self, model: &mut Model) -> Result<()> {
        let plans: Vec<PromptPlan> = self
            .dataset
            .catalog
            .items()
            .iter()
            .map(|it| self.pretrain_plan(it))
            .filter(|p| p.len() >= 2)
            .collect();
        let tr = Trainable {
            backbone: true,
            ..Trainable::none()
        };
        let mut st = TrainState::new(model.clone());
        for epoch in 0..self.config.lm_pretrain_epochs {
            let mut order: Vec<usize> = (0..plans.len()).collect();
            let seed = stable_hash(&[b"pretrain", &self.config.seed.to_le_bytes(), &(epoch as u64).to_le_bytes()]);
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for chunk in order.chunks(self.config.batch_size) {
                let scale = 1.0 / chunk.len() as f64;
                let results = chunk
                    .par_iter()
                    .map(|&i| {
                        let b = st.model.bind(tr);
                        let mut g = Graph::new();
                        let l = b.lm_loss(&mut g, &plans[i], self.store, self.config.fallback)?;
                        let l = g.scale(l, scale);
                        Ok((g.scalar(l), g.backward(l)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut acc: Vec<Option<Mat>> = vec![None; st.model.params.len()];
                let mut total = 0.0;
                for (l, grads) in results {
                    total += l;
                    accumulate(&mut acc, grads);
                }
                if !total.is_finite() {
                    return Err(Error::NonFinite { step: st.step });
                }
                apply_adam(&mut st, &acc, tr, self.config.lr);
            }
        }
        *model = st.model;
        Ok(())
    }

    /// One optimizer update on the batch at `state.step`.
    pub fn step(&self, state: &mut TrainState) -> Result<StepLog> {
        let start = Instant::now();
        let bpe = self.batches_per_epoch() as u64;
        let epoch = (state.step / bpe) as usize;
        let b = (state.step % bpe) as usize;
        let order = self.epoch_order(epoch);
        let bs = self.config.batch_size;
        let batch: Vec<Example> = order[b * bs..((b + 1) * bs).min(order.len())]
            .iter()
            .map(|&i| self.examples[i])
            .collect();
        let phase = self.phase(epoch);
        let log = self.combined_step(state, &batch, phase, epoch)?;
        Ok(StepLog {
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            ..log
        })
    }

    fn combined_step(&self, state: &mut TrainState, batch: &[Example], phase: Phase, epoch: usize) -> Result<StepLog> {
        let tr = self.trainable(phase);
        let scale = 1.0 / batch.len() as f64;
        let prompter = self.prompter();
        let types = &self.config.types;
        let results = batch
            .par_iter()
            .map(|ex| {
                let u = &self.dataset.split.users[ex.user];
                let prefix = &u.train[..ex.cut];
                let next = &u.train[ex.cut];
                let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[
                    b"example",
                    &self.config.seed.to_le_bytes(),
                    &(epoch as u64).to_le_bytes(),
                    u.user_id.as_bytes(),
                    &(ex.cut as u64).to_le_bytes(),
                ]));
                let b = state.model.bind(tr);
                let mut g = Graph::new();
                let mut parts = Vec::new();
                let mut risa = None;
                if phase != Phase::RetrieveOnly {
                    let e = prompter.build_risa_pair(self.templates, prefix, next, self.config.budget, &mut rng)?;
                    let l = b.lm_loss(&mut g, &e.plan, self.store, self.config.fallback)?;
                    risa = Some(l);
                    parts.push(l);
                }
                let mut reri = Vec::new();
                if phase != Phase::AlignOnly {
                    let history: HashSet<&str> = u.history().map(String::as_str).collect();
                    let neg = sample_negative(&history, &self.catalog_ids, &mut rng)?;
                    let plan = prompter.build_rec_plan(prefix, self.config.budget)?;
                    let h = b.user_repr(&mut g, &plan, self.store, self.config.fallback)?;
                    reri = reri_terms(&b, &mut g, h, next, &neg, types, self.store, self.config.fallback)?;
                    parts.extend(reri.iter().map(|(_, v)| *v));
                }
                let total = g.sum(parts);
                let total = g.scale(total, scale);
                let risa_v = risa.map(|v| g.scalar(v));
                let reri_v: Vec<(FeatureType, f64)> = reri.iter().map(|(t, v)| (*t, g.scalar(*v))).collect();
                Ok((risa_v, reri_v, g.backward(total)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut acc: Vec<Option<Mat>> = vec![None; state.model.params.len()];
        let mut risa_sum = 0.0;
        let mut reri_sum: BTreeMap<FeatureType, f64> = BTreeMap::new();
        for (risa, reri, grads) in results {
            if let Some(r) = risa {
                risa_sum += r;
            }
            for (t, v) in reri {
                *reri_sum.entry(t).or_default() += v;
            }
            accumulate(&mut acc, grads);
        }
        let n = batch.len() as f64;
        let l_risa = (phase != Phase::RetrieveOnly).then(|| risa_sum / n);
        let l_reri: BTreeMap<FeatureType, f64> = reri_sum.into_iter().map(|(t, v)| (t, v / n)).collect();
        let mut l_final = l_risa.unwrap_or(0.0);
        for t in types {
            if let Some(v) = l_reri.get(t) {
                l_final += v;
            }
        }
        let step = state.step;
        if !l_final.is_finite() || acc.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite { step });
        }
        apply_adam(state, &acc, tr, self.config.lr);
        Ok(StepLog {
            step,
            l_final,
            l_risa,
            l_reri,
            wall_ms: 0.0,
        })
    }

    /// Runs steps until `state.step == target`.
    pub fn run_to(&self, state: &mut TrainState, target: u64) -> Result<Vec<StepLog>> {
        let mut logs = Vec::new();
        while state.step < target {
            logs.push(self.step(state)?);
        }
        Ok(logs)
    }

    /// Validation Hit@5: history = train prefix, truth = validation item.
    pub fn validate(&self, model: &Model) -> Result<f64> {
        let r = evaluate(
            &ModelScorer(self.recommender(model)),
            &self.dataset.split.users,
            &self.catalog_ids,
            Target::Validation,
            &[5],
            self.config.val_negatives,
            self.config.seed,
        )?;
        Ok(r.hit[0])
    }

    /// Full run with early stopping on validation Hit@5; returns the best model.
    pub fn train(&self) -> Result<TrainOutcome> {
        let mut state = self.init_state()?;
        self.train_from(&mut state)
    }

    pub fn train_from(&self, state: &mut TrainState) -> Result<TrainOutcome> {
        let bpe = self.batches_per_epoch() as u64;
        let cfg = &self.config;
        let eval_start = if cfg.two_stage { cfg.stage1_epochs.min(cfg.epochs) } else { 0 };
        let mut best = state.model.clone();
        let mut best_hit: Option<f64> = None;
        let mut epochs = Vec::new();
        let mut steps = Vec::new();
        let mut bad = 0;
        let mut stopped_early = false;
        let first_epoch = (state.step / bpe) as usize;
        if cfg.epochs > 0 && eval_start == 0 && first_epoch == 0 {
            let hit = self.validate(&state.model)?;
            epochs.push(EpochLog {
                epoch: 0,
                val_hit5: hit,
                improved: true,
            });
            best_hit = Some(hit);
        }
        for epoch in first_epoch..cfg.epochs {
            steps.extend(self.run_to(state, (epoch as u64 + 1) * bpe)?);
            let done = epoch + 1;
            if done < eval_start {
                best = state.model.clone();
                continue;
            }
            let hit = self.validate(&state.model)?;
            let improved = best_hit.map_or(true, |b| hit > b);
            epochs.push(EpochLog {
                epoch: done,
                val_hit5: hit,
                improved,
            });
            if improved {
                best = state.model.clone();
                best_hit = Some(hit);
                bad = 0;
            } else {
                bad += 1;
                if bad >= cfg.patience.max(1) {
                    stopped_early = done < cfg.epochs;
                    break;
                }
            }
        }
        Ok(TrainOutcome {
            best,
            best_val_hit5: best_hit,
            steps,
            epochs,
            stopped_early,
            final_state: state.clone(),
        })
    }
}

fn accumulate(acc: &mut [Option<Mat>], grads: crate::nn::graph::ParamGrads) {
    for (id, g) in grads {
        match &mut acc[id] {
            Some(a) => a.add_assign(&g),
            slot => *slot = Some(g),
        }
    }
}

/// Adam on every trainable parameter (missing gradients count as zero), then
/// rounds parameters and moments to `f32` storage precision.
fn apply_adam(state: &mut TrainState, acc: &[Option<Mat>], tr: Trainable, lr: f64) {
    state.step += 1;
    let t = state.step;
    for (i, g) in acc.iter().enumerate() {
        let group: Group = state.model.params.get(i).group;
        if !tr.allows(group) {
            continue;
        }
        let len = state.m[i].data().len();
        let zeros;
        let g = match g {
            Some(g) => g.data(),
            None => {
                zeros = vec![0.0; len];
                &zeros
            }
        };
        let upd = optimizer_update(state.m[i].data_mut(), state.v[i].data_mut(), g, t, lr);
        let p = state.model.params.value_mut(i);
        for ((p, u), (m, v)) in p
            .data_mut()
            .iter_mut()
            .zip(&upd)
            .zip(state.m[i].data_mut().iter_mut().zip(state.v[i].data_mut().iter_mut()))
        {
            *p = (*p - u) as f32 as f64;
            *m = *m as f32 as f64;
            *v = *v as f32 as f64;
        }
    }
}
