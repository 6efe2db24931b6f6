//! Decoder-only transformer with `[VISUAL]`/`[REC]` slot injection, the
//! feature adaptor and the per-type retrieval projectors.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{FeatureStore, FeatureType};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::graph::{Graph, ParamGrads, Var};
use crate::nn::mat::Mat;
use crate::nn::params::{Group, ParamStore, Trainable};
use crate::prompt::{PromptPlan, SlotKind, TokenId};

pub const INIT_SCALE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub trainable: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            vocab_size: 4096,
            d_model: 64,
            n_layers: 1,
            n_heads: 4,
            d_ff: 128,
            max_context: 4096,
            trainable: true,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_context", self.max_context),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub d_visual: usize,
    pub adaptor_hidden: usize,
    pub d_shared: usize,
    /// Retrieval types with a projector pair, and each type's item feature width.
    pub item_dims: Vec<(FeatureType, usize)>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            d_visual: 32,
            adaptor_hidden: 512,
            d_shared: 256,
            item_dims: vec![(FeatureType::Img, 32)],
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.d_visual == 0 || self.adaptor_hidden == 0 || self.d_shared == 0 {
            return Err(Error::Config("adaptor and projector widths must be positive".into()));
        }
        for &(t, dim) in &self.item_dims {
            if t == FeatureType::JointText {
                return Err(Error::Config("jointtext is not a retrieval type".into()));
            }
            if dim == 0 {
                return Err(Error::Config(format!("{t} feature width must be positive")));
            }
        }
        Ok(())
    }

    pub fn types(&self) -> Vec<FeatureType> {
        self.item_dims.iter().map(|(t, _)| *t).collect()
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let b = &self.backbone;
        let types = self
            .item_dims
            .iter()
            .map(|(t, d)| format!("{t}:{d}"))
            .collect::<Vec<_>>()
            .join(",");
        [
            ("vocab_size", b.vocab_size.to_string()),
            ("d_model", b.d_model.to_string()),
            ("n_layers", b.n_layers.to_string()),
            ("n_heads", b.n_heads.to_string()),
            ("d_ff", b.d_ff.to_string()),
            ("max_context", b.max_context.to_string()),
            ("backbone_trainable", b.trainable.to_string()),
            ("d_visual", self.d_visual.to_string()),
            ("adaptor_hidden", self.adaptor_hidden.to_string()),
            ("d_shared", self.d_shared.to_string()),
            ("types", types),
            ("init_seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let mut item_dims = Vec::new();
        for part in c.get("types")?.split(',').filter(|s| !s.is_empty()) {
            let (t, d) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("bad types entry {part:?}")))?;
            let d = d
                .parse()
                .map_err(|_| Error::Config(format!("bad types entry {part:?}")))?;
            item_dims.push((t.parse()?, d));
        }
        let cfg = Self {
            backbone: BackboneConfig {
                vocab_size: c.parse("vocab_size")?,
                d_model: c.parse("d_model")?,
                n_layers: c.parse("n_layers")?,
                n_heads: c.parse("n_heads")?,
                d_ff: c.parse("d_ff")?,
                max_context: c.parse("max_context")?,
                trainable: c.parse("backbone_trainable")?,
            },
            d_visual: c.parse("d_visual")?,
            adaptor_hidden: c.parse("adaptor_hidden")?,
            d_shared: c.parse("d_shared")?,
            item_dims,
            seed: c.parse("init_seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Logits and final hidden states for every position.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Mat,
    pub hidden: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn proj_name(t: FeatureType, side: &str, part: &str) -> String {
    format!("proj.{t}.{side}.{part}")
}

/// Feature row for `item`; a missing image row falls back to the joint text
/// row when `fallback` is set.
pub fn feature_row<'s>(
    store: &'s FeatureStore,
    kind: FeatureType,
    item_id: &str,
    fallback: bool,
) -> Result<&'s [f32]> {
    if let Some(r) = store.require(kind)?.row(item_id) {
        return Ok(r);
    }
    if kind == FeatureType::Img && fallback {
        if let Some(r) = store.row(FeatureType::JointText, item_id) {
            return Ok(r);
        }
        return Err(Error::invalid(format!(
            "item {item_id} has neither an image nor a jointtext row"
        )));
    }
    Err(Error::invalid(format!("item {item_id} has no {kind} row")))
}

fn rows_to_mat(rows: &[&[f32]], dim: usize) -> Mat {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        data.extend(r.iter().map(|&v| v as f64));
    }
    Mat::from_vec(rows.len(), dim, data)
}

impl Model {
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let b = &config.backbone;
        let (d, s) = (b.d_model, INIT_SCALE);
        p.add_uniform("tok_emb", Group::Backbone, b.vocab_size, d, s, &mut rng);
        p.add_uniform("pos_emb", Group::Backbone, b.max_context, d, s, &mut rng);
        for l in 0..b.n_layers {
            let n = |x: &str| format!("layer{l}.{x}");
            p.add(n("ln1.g"), Group::Backbone, Mat::filled(1, d, 1.0));
            p.add(n("ln1.b"), Group::Backbone, Mat::zeros(1, d));
            for w in ["wq", "wk", "wv", "wo"] {
                p.add_uniform(n(&format!("attn.{w}")), Group::Backbone, d, d, s, &mut rng);
                let bias = format!("attn.b{}", &w[1..]);
                p.add(n(&bias), Group::Backbone, Mat::zeros(1, d));
            }
            p.add(n("ln2.g"), Group::Backbone, Mat::filled(1, d, 1.0));
            p.add(n("ln2.b"), Group::Backbone, Mat::zeros(1, d));
            p.add_uniform(n("ffn.w1"), Group::Backbone, b.d_ff, d, s, &mut rng);
            p.add(n("ffn.b1"), Group::Backbone, Mat::zeros(1, b.d_ff));
            p.add_uniform(n("ffn.w2"), Group::Backbone, d, b.d_ff, s, &mut rng);
            p.add(n("ffn.b2"), Group::Backbone, Mat::zeros(1, d));
        }
        p.add("ln_f.g", Group::Backbone, Mat::filled(1, d, 1.0));
        p.add("ln_f.b", Group::Backbone, Mat::zeros(1, d));
        let h = config.adaptor_hidden;
        p.add_uniform("adaptor.w1", Group::Adaptor, h, config.d_visual, s, &mut rng);
        p.add("adaptor.b1", Group::Adaptor, Mat::zeros(1, h));
        p.add_uniform("adaptor.w2", Group::Adaptor, d, h, s, &mut rng);
        p.add("adaptor.b2", Group::Adaptor, Mat::zeros(1, d));
        p.add_uniform("rec", Group::Rec, 1, d, s, &mut rng);
        for &(t, dim) in &config.item_dims {
            let ds = config.d_shared;
            p.add_uniform(proj_name(t, "user", "w"), Group::Projector, ds, d, s, &mut rng);
            p.add(proj_name(t, "user", "b"), Group::Projector, Mat::zeros(1, ds));
            p.add_uniform(proj_name(t, "item", "w"), Group::Projector, ds, dim, s, &mut rng);
            p.add(proj_name(t, "item", "b"), Group::Projector, Mat::zeros(1, ds));
        }
        Ok(Self { config, params: p })
    }

    /// Default trainability: everything, except the backbone when frozen.
    pub fn default_trainable(&self) -> Trainable {
        Trainable {
            backbone: self.config.backbone.trainable,
            ..Trainable::all()
        }
    }

    pub fn bind(&self, trainable: Trainable) -> Bound<'_> {
        Bound { model: self, trainable }
    }

    pub fn adaptor_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.config.d_visual {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_visual,
                actual: v.len(),
            });
        }
        let b = self.bind(Trainable::none());
        let mut g = Graph::new();
        let x = g.constant(Mat::row_vector(v));
        let y = b.adaptor(&mut g, x)?;
        Ok(g.value(y).data().to_vec())
    }

    pub fn assemble_input_embeddings(
        &self,
        plan: &PromptPlan,
        store: &FeatureStore,
        fallback: bool,
    ) -> Result<Mat> {
        let b = self.bind(Trainable::none());
        let mut g = Graph::new();
        let x = b.embed(&mut g, plan, store, fallback)?;
        Ok(g.value(x).clone())
    }

    pub fn forward(&self, embeddings: &Mat) -> Result<ForwardOutput> {
        let b = self.bind(Trainable::none());
        let mut g = Graph::new();
        let x = g.constant(embeddings.clone());
        let h = b.hidden(&mut g, x)?;
        let emb = b.param(&mut g, "tok_emb")?;
        let logits = g.matmul_t(h, emb);
        Ok(ForwardOutput {
            logits: g.value(logits).clone(),
            hidden: g.value(h).clone(),
        })
    }

    pub fn forward_plan(&self, plan: &PromptPlan, store: &FeatureStore, fallback: bool) -> Result<ForwardOutput> {
        self.forward(&self.assemble_input_embeddings(plan, store, fallback)?)
    }

    /// `h([REC])` for a plan ending in `[REC]`.
    pub fn user_repr(&self, plan: &PromptPlan, store: &FeatureStore, fallback: bool) -> Result<Vec<f64>> {
        let b = self.bind(Trainable::none());
        let mut g = Graph::new();
        let h = b.user_repr(&mut g, plan, store, fallback)?;
        Ok(g.value(h).data().to_vec())
    }

    pub fn project_user(&self, h: &[f64], t: FeatureType) -> Result<Vec<f64>> {
        let b = self.bind(Trainable::none());
        let mut g = Graph::new();
        let x = g.constant(Mat::row_vector(h));
        let o = b.project_user(&mut g, x, t)?;
        Ok(g.value(o).data().to_vec())
    }

    /// Projects one item feature row per matrix row.
    pub fn project_items(&self, feats: Mat, t: FeatureType) -> Result<Mat> {
        let b = self.bind(Trainable::none());
        let mut g = Graph::new();
        let x = g.constant(feats);
        let o = b.project_items(&mut g, x, t)?;
        Ok(g.value(o).clone())
    }

    /// Evaluates a scalar loss built by `f` and returns it with the gradients
    /// of every trainable parameter it reaches.
    pub fn gradients<F>(&self, trainable: Trainable, f: F) -> Result<(f64, ParamGrads)>
    where
        F: for<'g> FnOnce(&Bound<'g>, &mut Graph<'g>) -> Result<Var>,
    {
        let b = self.bind(trainable);
        let mut g = Graph::new();
        let loss = f(&b, &mut g)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::invalid(format!("non-finite loss {value}")));
        }
        Ok((value, g.backward(loss)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.to_kv(),
            tensors: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    /// Rebuilds the model from a checkpoint, checking every tensor's shape.
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let config = ModelConfig::from_checkpoint(c)?;
        let mut model = Model::init(config)?;
        for i in 0..model.params.len() {
            let name = model.params.get(i).name.clone();
            let t = c
                .tensor(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks tensor {name}")))?;
            let want = model.params.get(i).value.shape();
            if t.shape() != want {
                return Err(Error::Config(format!(
                    "tensor {name} has shape {:?}, config implies {want:?}",
                    t.shape()
                )));
            }
            *model.params.value_mut(i) = t.clone();
        }
        Ok(model)
    }
}

/// A model paired with the set of groups that receive gradients; builds the
/// model's pieces onto a [`Graph`].
pub struct Bound<'a> {
    pub model: &'a Model,
    pub trainable: Trainable,
}

impl<'a> Bound<'a> {
    pub fn param(&self, g: &mut Graph<'a>, name: &str) -> Result<Var> {
        let idx = self.model.params.index_of(name)?;
        let p = self.model.params.get(idx);
        Ok(g.param(idx, &p.value, self.trainable.allows(p.group)))
    }

    fn linear(&self, g: &mut Graph<'a>, x: Var, w: &str, b: &str) -> Result<Var> {
        let (w, b) = (self.param(g, w)?, self.param(g, b)?);
        Ok(g.linear(x, w, b))
    }

    /// `W2 relu(W1 v + b1) + b2`, row-wise.
    pub fn adaptor(&self, g: &mut Graph<'a>, v: Var) -> Result<Var> {
        let h = self.linear(g, v, "adaptor.w1", "adaptor.b1")?;
        let h = g.relu(h);
        self.linear(g, h, "adaptor.w2", "adaptor.b2")
    }

    /// Token embeddings with adaptor outputs at `[VISUAL]` slots and the
    /// learned vector at `[REC]`, plus positional embeddings.
    pub fn embed(&self, g: &mut Graph<'a>, plan: &PromptPlan, store: &FeatureStore, fallback: bool) -> Result<Var> {
        let cfg = &self.model.config;
        let n = plan.len();
        if n == 0 {
            return Err(Error::invalid("empty prompt plan"));
        }
        if n > cfg.backbone.max_context {
            return Err(Error::invalid(format!(
                "plan length {n} exceeds max context {}",
                cfg.backbone.max_context
            )));
        }
        if let Some(&bad) = plan.ids.iter().find(|&&t| t as usize >= cfg.backbone.vocab_size) {
            return Err(Error::invalid(format!("token id {bad} outside the vocabulary")));
        }
        let tok = self.param(g, "tok_emb")?;
        let mut x = g.gather(tok, plan.ids.iter().map(|&t| t as usize).collect());
        let mut rows = Vec::new();
        let mut pos = Vec::new();
        for s in plan.visual_slots() {
            let item = s
                .item_id
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("visual slot at {} has no item", s.position)))?;
            rows.push(feature_row(store, FeatureType::Img, item, fallback)?);
            pos.push(s.position);
        }
        if !rows.is_empty() {
            if let Some(r) = rows.iter().find(|r| r.len() != cfg.d_visual) {
                return Err(Error::DimensionMismatch {
                    expected: cfg.d_visual,
                    actual: r.len(),
                });
            }
            let feats = rows_to_mat(&rows, cfg.d_visual);
            let v = g.constant(feats);
            let v = self.adaptor(g, v)?;
            x = g.replace_rows(x, v, pos);
        }
        if let Some(p) = plan.slots.iter().find(|s| s.kind == SlotKind::Rec).map(|s| s.position) {
            let rec = self.param(g, "rec")?;
            x = g.replace_rows(x, rec, vec![p]);
        }
        let pe = self.param(g, "pos_emb")?;
        let pe = g.gather(pe, (0..n).collect());
        Ok(g.add(x, pe))
    }

    /// Final-layer hidden states (after the closing layer norm).
    pub fn hidden(&self, g: &mut Graph<'a>, mut x: Var) -> Result<Var> {
        let b = &self.model.config.backbone;
        if g.value(x).rows() > b.max_context {
            return Err(Error::invalid(format!(
                "input length {} exceeds max context {}",
                g.value(x).rows(),
                b.max_context
            )));
        }
        let dh = b.d_model / b.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for l in 0..b.n_layers {
            let n = |s: &str| format!("layer{l}.{s}");
            let (g1, b1) = (self.param(g, &n("ln1.g"))?, self.param(g, &n("ln1.b"))?);
            let h = g.layer_norm(x, g1, b1);
            let q = self.linear(g, h, &n("attn.wq"), &n("attn.bq"))?;
            let k = self.linear(g, h, &n("attn.wk"), &n("attn.bk"))?;
            let v = self.linear(g, h, &n("attn.wv"), &n("attn.bv"))?;
            let att = if b.n_heads == 1 {
                let s = g.matmul_t(q, k);
                let p = g.causal_softmax(s, scale);
                g.matmul(p, v)
            } else {
                let mut heads = Vec::with_capacity(b.n_heads);
                for hd in 0..b.n_heads {
                    let qs = g.slice_cols(q, hd * dh, dh);
                    let ks = g.slice_cols(k, hd * dh, dh);
                    let vs = g.slice_cols(v, hd * dh, dh);
                    let s = g.matmul_t(qs, ks);
                    let p = g.causal_softmax(s, scale);
                    heads.push(g.matmul(p, vs));
                }
                g.concat_cols(heads)
            };
            let att = self.linear(g, att, &n("attn.wo"), &n("attn.bo"))?;
            x = g.add(x, att);
            let (g2, b2) = (self.param(g, &n("ln2.g"))?, self.param(g, &n("ln2.b"))?);
            let h = g.layer_norm(x, g2, b2);
            let f = self.linear(g, h, &n("ffn.w1"), &n("ffn.b1"))?;
            let f = g.gelu(f);
            let f = self.linear(g, f, &n("ffn.w2"), &n("ffn.b2"))?;
            x = g.add(x, f);
        }
        let (gf, bf) = (self.param(g, "ln_f.g")?, self.param(g, "ln_f.b")?);
        Ok(g.layer_norm(x, gf, bf))
    }

    /// Mean next-token negative log-likelihood over the plan's masked positions.
    pub fn lm_loss(&self, g: &mut Graph<'a>, plan: &PromptPlan, store: &FeatureStore, fallback: bool) -> Result<Var> {
        let (rows, targets) = next_token_pairs(&plan.ids, &plan.target_mask)?;
        let x = self.embed(g, plan, store, fallback)?;
        let h = self.hidden(g, x)?;
        let h = g.select_rows(h, rows);
        let emb = self.param(g, "tok_emb")?;
        let logits = g.matmul_t(h, emb);
        Ok(g.cross_entropy(logits, targets))
    }

    /// `h([REC])` as a `1 x d` node.
    pub fn user_repr(&self, g: &mut Graph<'a>, plan: &PromptPlan, store: &FeatureStore, fallback: bool) -> Result<Var> {
        let p = plan
            .rec_position()
            .ok_or_else(|| Error::invalid("plan has no [REC] slot"))?;
        let x = self.embed(g, plan, store, fallback)?;
        let h = self.hidden(g, x)?;
        Ok(g.select_rows(h, vec![p]))
    }

    fn check_type(&self, t: FeatureType) -> Result<usize> {
        self.model
            .config
            .item_dims
            .iter()
            .find(|(k, _)| *k == t)
            .map(|(_, d)| *d)
            .ok_or_else(|| Error::Config(format!("no projector for feature type {t}")))
    }

    pub fn project_user(&self, g: &mut Graph<'a>, h: Var, t: FeatureType) -> Result<Var> {
        self.check_type(t)?;
        let d = self.model.config.backbone.d_model;
        if g.value(h).cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: g.value(h).cols(),
            });
        }
        self.linear(g, h, &proj_name(t, "user", "w"), &proj_name(t, "user", "b"))
    }

    pub fn project_items(&self, g: &mut Graph<'a>, feats: Var, t: FeatureType) -> Result<Var> {
        let dim = self.check_type(t)?;
        if g.value(feats).cols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: g.value(feats).cols(),
            });
        }
        self.linear(g, feats, &proj_name(t, "item", "w"), &proj_name(t, "item", "b"))
    }
}

/// Hidden-row indices and target ids for next-token prediction: the token at
/// masked position `t` is predicted from row `t - 1`.
pub fn next_token_pairs(ids: &[TokenId], mask: &[bool]) -> Result<(Vec<usize>, Vec<usize>)> {
    if ids.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            actual: mask.len(),
        });
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (t, &m) in mask.iter().enumerate() {
        if m {
            if t == 0 {
                return Err(Error::invalid("position 0 cannot be a prediction target"));
            }
            rows.push(t - 1);
            targets.push(ids[t] as usize);
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("no supervised positions"));
    }
    Ok((rows, targets))
}

/// Mean next-token negative log-likelihood from full logits.
pub fn lm_nll(logits: &Mat, ids: &[TokenId], mask: &[bool]) -> Result<f64> {
    let (rows, targets) = next_token_pairs(ids, mask)?;
    if logits.rows() != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            actual: logits.rows(),
        });
    }
    let mut total = 0.0;
    for (&r, &t) in rows.iter().zip(&targets) {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += log_z - row[t];
    }
    Ok(total / rows.len() as f64)
}

pub fn last_hidden(out: &ForwardOutput, position: usize) -> Result<Vec<f64>> {
    if position >= out.hidden.rows() {
        return Err(Error::invalid(format!(
            "position {position} out of range for {} rows",
            out.hidden.rows()
        )));
    }
    Ok(out.hidden.row(position).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureTable;
    use crate::prompt::plan::Slot;

    fn tiny() -> ModelConfig {
        ModelConfig {
            backbone: BackboneConfig {
                vocab_size: 20,
                d_model: 8,
                n_layers: 1,
                n_heads: 2,
                d_ff: 12,
                max_context: 16,
                trainable: true,
            },
            d_visual: 4,
            adaptor_hidden: 6,
            d_shared: 5,
            item_dims: vec![(FeatureType::Img, 4), (FeatureType::Cf, 3)],
            seed: 3,
        }
    }

    fn store() -> FeatureStore {
        let mut s = FeatureStore::new();
        s.insert(
            FeatureTable::new(FeatureType::Img, 4, vec![("a".into(), vec![0.1, -0.2, 0.3, 0.4])]).unwrap(),
        )
        .unwrap();
        s.insert(
            FeatureTable::new(
                FeatureType::JointText,
                4,
                vec![("a".into(), vec![0.5; 4]), ("b".into(), vec![-0.5, 0.1, 0.2, 0.9])],
            )
            .unwrap(),
        )
        .unwrap();
        s
    }

    fn plan(item: &str) -> PromptPlan {
        PromptPlan {
            ids: vec![7, 8, 4, 9, 5],
            slots: vec![
                Slot {
                    position: 2,
                    kind: SlotKind::Visual,
                    item_id: Some(item.into()),
                },
                Slot {
                    position: 4,
                    kind: SlotKind::Rec,
                    item_id: None,
                },
            ],
            target_mask: vec![false; 5],
            mode: "image",
            items_retained: 1,
        }
    }

    #[test]
    fn slot_positions_carry_adaptor_and_rec() {
        let m = Model::init(tiny()).unwrap();
        let s = store();
        let e = m.assemble_input_embeddings(&plan("a"), &s, false).unwrap();
        let pos = m.params.by_name("pos_emb").unwrap();
        let v: Vec<f64> = s.row(FeatureType::Img, "a").unwrap().iter().map(|&x| x as f64).collect();
        let a = m.adaptor_apply(&v).unwrap();
        for c in 0..8 {
            assert_eq!(e.get(2, c), a[c] + pos.get(2, c));
            assert_eq!(e.get(4, c), m.params.by_name("rec").unwrap().get(0, c) + pos.get(4, c));
        }
    }

    #[test]
    fn missing_image_needs_fallback() {
        let m = Model::init(tiny()).unwrap();
        let s = store();
        let err = m.assemble_input_embeddings(&plan("b"), &s, false).unwrap_err();
        assert!(err.to_string().contains('b'));
        let with = m.assemble_input_embeddings(&plan("b"), &s, true).unwrap();
        let v: Vec<f64> = s.row(FeatureType::JointText, "b").unwrap().iter().map(|&x| x as f64).collect();
        let a = m.adaptor_apply(&v).unwrap();
        let pos = m.params.by_name("pos_emb").unwrap();
        assert_eq!(with.get(2, 3), a[3] + pos.get(2, 3));
        assert_eq!(
            m.assemble_input_embeddings(&plan("a"), &s, false).unwrap(),
            m.assemble_input_embeddings(&plan("a"), &s, true).unwrap()
        );
    }

    #[test]
    fn adaptor_edge_cases() {
        let mut m = Model::init(tiny()).unwrap();
        *m.params.by_name_mut("adaptor.w1").unwrap() = Mat::zeros(6, 4);
        *m.params.by_name_mut("adaptor.b1").unwrap() = Mat::filled(1, 6, -1.0);
        let b2 = Mat::from_vec(1, 8, (0..8).map(|i| i as f64 * 0.5).collect());
        *m.params.by_name_mut("adaptor.b2").unwrap() = b2.clone();
        assert_eq!(m.adaptor_apply(&[3.0, -1.0, 2.0, 9.0]).unwrap(), b2.data());
        assert!(matches!(
            m.adaptor_apply(&[1.0]),
            Err(Error::DimensionMismatch { expected: 4, actual: 1 })
        ));
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let mut m = Model::init(tiny()).unwrap();
        *m.params.by_name_mut("tok_emb").unwrap() = Mat::zeros(20, 8);
        let mut p = plan("a");
        p.target_mask[3] = true;
        let out = m.forward_plan(&p, &store(), false).unwrap();
        let nll = lm_nll(&out.logits, &p.ids, &p.target_mask).unwrap();
        assert!((nll - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let mut m = Model::init(tiny()).unwrap();
        m.params.round_to_f32();
        let c = m.to_checkpoint();
        let back = Model::from_checkpoint(&Checkpoint::from_bytes(&c.to_bytes()).unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = c.clone();
        bad.tensors[0].1 = Mat::zeros(3, 3);
        assert!(Model::from_checkpoint(&bad).is_err());
    }

    #[test]
    fn length_limits() {
        let m = Model::init(tiny()).unwrap();
        assert!(m.forward(&Mat::zeros(17, 8)).is_err());
        let out = m.forward(&Mat::zeros(1, 8)).unwrap();
        assert_eq!(out.logits.shape(), (1, 20));
        assert_eq!(out.hidden.shape(), (1, 8));
        assert!(last_hidden(&out, 1).is_err());
    }
}
