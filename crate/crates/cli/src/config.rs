//! Flat `key=value` run configuration. Every key has a built-in default, can
//! be set in a config file and overridden by a command-line flag of the same
//! name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ilrec::data::features::parse_feature_types;
use ilrec::data::{FeatureType, SyntheticSpec};
use ilrec::nn::ModelConfig;
use ilrec::train::{Cuts, TrainConfig};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Which subcommands read a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmd {
    Synth,
    Prepare,
    Train,
    Eval,
    Overlap,
    Bench,
    Report,
}

impl Cmd {
    pub const ALL: [Cmd; 7] = [
        Cmd::Synth,
        Cmd::Prepare,
        Cmd::Train,
        Cmd::Eval,
        Cmd::Overlap,
        Cmd::Bench,
        Cmd::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Cmd::Synth => "synth",
            Cmd::Prepare => "prepare",
            Cmd::Train => "train",
            Cmd::Eval => "eval",
            Cmd::Overlap => "overlap",
            Cmd::Bench => "bench",
            Cmd::Report => "report",
        }
    }
}

pub struct Key {
    pub name: &'static str,
    pub default: String,
    pub help: &'static str,
    pub cmds: &'static [Cmd],
}

use Cmd::*;

const ALL: &[Cmd] = &Cmd::ALL;
const DATA: &[Cmd] = &[Synth, Prepare, Overlap];
const PREPARED: &[Cmd] = &[Prepare, Train, Eval, Bench];
const MODEL_RUN: &[Cmd] = &[Train, Eval, Bench];
const TRAIN: &[Cmd] = &[Train];
const SYNTH: &[Cmd] = &[Synth];

fn k(name: &'static str, default: impl ToString, help: &'static str, cmds: &'static [Cmd]) -> Key {
    Key {
        name,
        default: default.to_string(),
        help,
        cmds,
    }
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or("none".into(), |b| b.to_string())
}

/// The full key table, defaults taken from the library types.
pub fn keys() -> Vec<Key> {
    let s = SyntheticSpec::default();
    let t = TrainConfig::default();
    let m = ModelConfig::default();
    let types = t.types.iter().map(|x| x.name()).collect::<Vec<_>>().join(",");
    vec![
        k("seed", t.seed, "seed for data synthesis, image dropping, training and candidates", ALL),
        k("data_dir", "data", "raw data: interactions.tsv, items.tsv, features/", DATA),
        k("prepared_dir", "prepared", "filtered and split data written by prepare", PREPARED),
        k("reports_dir", "reports", "where report files are written", &[Eval, Overlap, Bench, Report]),
        k("checkpoint", "runs/model.ckpt", "model checkpoint path", MODEL_RUN),
        // synthesis
        k("n_users", s.n_users, "synthetic users", SYNTH),
        k("n_items", s.n_items, "synthetic items", SYNTH),
        k("latent_dim", s.latent_dim, "latent item factor dimension", SYNTH),
        k("noise", s.noise, "feature noise scale", SYNTH),
        k("mean_seq_len", s.mean_seq_len, "mean user sequence length", SYNTH),
        k("max_seq_len", s.max_seq_len, "longest user sequence", SYNTH),
        k("description_tokens", s.description_tokens, "target words per description", SYNTH),
        k("attribute_tokens", s.attribute_tokens, "target words per attribute block", SYNTH),
        k("d_visual", s.d_visual, "image and joint-text feature dimension", SYNTH),
        k("d_cf", s.d_cf, "CF feature dimension", SYNTH),
        k("d_text", s.d_text, "text feature dimension", SYNTH),
        k("n_categories", s.n_categories, "item categories", SYNTH),
        k("preference_strength", s.preference_strength, "weight of user preference in item choice", SYNTH),
        k("popularity_skew", s.popularity_skew, "exponent of the popularity prior", SYNTH),
        k("category_drift", s.category_drift, "bonus for staying in the previous category", SYNTH),
        k("joint_overlap", s.joint_overlap, "share of the image map reused for joint text", SYNTH),
        // preparation
        k("k_core", 5, "minimum interactions per user and item", &[Prepare]),
        k("drop_images", 0.0, "fraction of items whose image is removed", &[Prepare]),
        // model
        k("d_model", m.backbone.d_model, "backbone width", TRAIN),
        k("n_layers", m.backbone.n_layers, "decoder layers", TRAIN),
        k("n_heads", m.backbone.n_heads, "attention heads", TRAIN),
        k("d_ff", m.backbone.d_ff, "feed-forward width", TRAIN),
        k("max_context", m.backbone.max_context, "positional table size", TRAIN),
        k("adaptor_hidden", m.adaptor_hidden, "adaptor hidden width", TRAIN),
        k("d_shared", m.d_shared, "shared retrieval space dimension", TRAIN),
        // training
        k("mode", &t.mode, "item representation: image, attribute, description, image+description", TRAIN),
        k("types", types, "retrieval feature types, e.g. img,cf,text", TRAIN),
        k("lr", t.lr, "Adam learning rate", TRAIN),
        k("batch_size", t.batch_size, "examples per step", TRAIN),
        k("epochs", t.epochs, "training epochs", TRAIN),
        k("patience", t.patience, "epochs without validation gain before stopping", TRAIN),
        k("backbone_trainable", t.backbone_trainable, "train the backbone with the heads", TRAIN),
        k("lm_pretrain_epochs", t.lm_pretrain_epochs, "language-model passes over item text before training", TRAIN),
        k("two_stage", t.two_stage, "alignment epochs first, then retrieval with the adaptor frozen", TRAIN),
        k("stage1_epochs", t.stage1_epochs, "alignment-only epochs when two_stage is set", TRAIN),
        k("cuts", t.cuts, "training targets per user: all or last", TRAIN),
        k("val_negatives", t.val_negatives, "negatives per validation user", TRAIN),
        k("max_vocab", t.max_vocab, "vocabulary size cap", TRAIN),
        k("fallback", t.fallback, "use joint-text rows for items without an image", MODEL_RUN),
        k("budget", opt_usize(t.budget), "context budget in tokens, or none", MODEL_RUN),
        k("log", "", "training log CSV (default: <checkpoint>.log.csv)", TRAIN),
        // evaluation
        k("scorer", "model", "scorer: model, random, oracle, popularity", &[Eval]),
        k("target", "test", "test or validation", &[Eval]),
        k("ks", "5,10", "cutoffs for Hit and NDCG", &[Eval, Bench]),
        k("negatives", ilrec::eval::DEFAULT_NEGATIVES, "sampled negatives per user", &[Eval, Bench]),
        k("groups", 4, "popularity groups for the cold/warm breakdown", &[Eval]),
        k("tag", "", "suffix for report file names", &[Eval, Overlap, Bench]),
        // bench
        k("bench", "tokens", "bench kinds: tokens, timing, sweep (comma list)", &[Bench]),
        k("bench_modes", "image,attribute,description", "modes for the token bench", &[Bench]),
        k("budgets", "4096,2048,1024,512,256", "budgets for the sweep", &[Bench]),
        k("checkpoints", "", "extra checkpoints for timing and sweep, comma list of paths", &[Bench]),
        k("group_size", 20, "users per length group in the timing bench", &[Bench]),
        k("length_boundaries", "3,8,12,16", "sequence-length group starts", &[Bench]),
    ]
}

/// Resolved configuration for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cmd: Cmd,
    values: BTreeMap<String, String>,
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then the file (if any), then explicit flags. Keys unknown to
    /// the command are rejected.
    pub fn resolve(cmd: Cmd, file: Option<&Path>, flags: &[(String, String)]) -> CliResult<Self> {
        let table = keys();
        let mut values: BTreeMap<String, String> = table
            .iter()
            .filter(|k| k.cmds.contains(&cmd))
            .map(|k| (k.name.to_string(), k.default.clone()))
            .collect();
        let mut set = |k: &str, v: &str, origin: &str| -> CliResult<()> {
            match table.iter().find(|x| x.name == k) {
                None => Err(CliError::config(format!("unknown key {k:?} in {origin}"))),
                Some(key) if key.cmds.contains(&cmd) => {
                    values.insert(k.to_string(), v.to_string());
                    Ok(())
                }
                // Shared files carry keys for other commands.
                Some(_) if origin != "flags" => Ok(()),
                Some(_) => Err(CliError::config(format!("key {k:?} does not apply to {}", cmd.name()))),
            }
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::missing(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_config_text(&text)? {
                set(&k, &v, &path.display().to_string())?;
            }
        }
        for (k, v) in flags {
            set(k, v, "flags")?;
        }
        let cfg = Self { cmd, values };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> CliResult<()> {
        for k in self.values.keys() {
            match k.as_str() {
                "types" => {
                    self.types()?;
                }
                "cuts" => {
                    self.cuts()?;
                }
                "budget" => {
                    self.budget()?;
                }
                "ks" | "budgets" | "length_boundaries" => {
                    self.usize_list(k)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} is not part of the {} config", self.cmd.name()))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| CliError::config(format!("bad value {v:?} for {key}")))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.get(key))
    }

    pub fn usize_list(&self, key: &str) -> CliResult<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::config(format!("bad number {s:?} in {key}"))))
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    pub fn types(&self) -> CliResult<Vec<FeatureType>> {
        Ok(parse_feature_types(self.get("types"))?)
    }

    pub fn cuts(&self) -> CliResult<Cuts> {
        Ok(self.get("cuts").parse()?)
    }

    pub fn budget(&self) -> CliResult<Option<usize>> {
        match self.get("budget") {
            "none" | "" => Ok(None),
            _ => self.parse("budget").map(Some),
        }
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// SHA-256 over the sorted `key=value` lines.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.cmd.name().as_bytes());
        h.update(b"\n");
        for (k, v) in &self.values {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Report header: command, config hash and every resolved value.
    pub fn meta(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = self
            .values
            .iter()
            .map(|(k, v)| (format!("config.{k}"), v.clone()))
            .collect();
        m.insert("command".into(), self.cmd.name().into());
        m.insert("config_hash".into(), self.hash());
        m
    }

    pub fn synthetic_spec(&self) -> CliResult<SyntheticSpec> {
        let s = SyntheticSpec {
            n_users: self.parse("n_users")?,
            n_items: self.parse("n_items")?,
            latent_dim: self.parse("latent_dim")?,
            noise: self.parse("noise")?,
            mean_seq_len: self.parse("mean_seq_len")?,
            max_seq_len: self.parse("max_seq_len")?,
            seed: self.parse("seed")?,
            description_tokens: self.parse("description_tokens")?,
            attribute_tokens: self.parse("attribute_tokens")?,
            d_visual: self.parse("d_visual")?,
            d_cf: self.parse("d_cf")?,
            d_text: self.parse("d_text")?,
            n_categories: self.parse("n_categories")?,
            preference_strength: self.parse("preference_strength")?,
            popularity_skew: self.parse("popularity_skew")?,
            category_drift: self.parse("category_drift")?,
            joint_overlap: self.parse("joint_overlap")?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let mut m = ModelConfig::default();
        m.backbone.d_model = self.parse("d_model")?;
        m.backbone.n_layers = self.parse("n_layers")?;
        m.backbone.n_heads = self.parse("n_heads")?;
        m.backbone.d_ff = self.parse("d_ff")?;
        m.backbone.max_context = self.parse("max_context")?;
        m.adaptor_hidden = self.parse("adaptor_hidden")?;
        m.d_shared = self.parse("d_shared")?;
        Ok(m)
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let t = TrainConfig {
            lr: self.parse("lr")?,
            batch_size: self.parse("batch_size")?,
            epochs: self.parse("epochs")?,
            seed: self.parse("seed")?,
            types: self.types()?,
            mode: self.get("mode").to_string(),
            backbone_trainable: self.parse("backbone_trainable")?,
            patience: self.parse("patience")?,
            fallback: self.parse("fallback")?,
            budget: self.budget()?,
            two_stage: self.parse("two_stage")?,
            stage1_epochs: self.parse("stage1_epochs")?,
            lm_pretrain_epochs: self.parse("lm_pretrain_epochs")?,
            cuts: self.cuts()?,
            val_negatives: self.parse("val_negatives")?,
            max_vocab: self.parse("max_vocab")?,
        };
        t.validate()?;
        Ok(t)
    }
}
