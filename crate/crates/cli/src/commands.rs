//! Subcommand bodies. Each takes a resolved [`RunConfig`] and writes its
//! outputs; progress goes to stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ilrec::data::records::write_interactions;
use ilrec::data::{popularity_groups, synth_generate, FeatureStore, FeatureType};
use ilrec::eval::bench::{
    complexity_estimate, context_budget_sweep, length_groups, timing_bench, token_histogram,
};
use ilrec::eval::report::{write_csv, write_json};
use ilrec::eval::{by_item_group, evaluate, group_eval, overlap_report, scorers, ScorerEnv, Target};
use ilrec::nn::{Checkpoint, Model};
use ilrec::prompt::{count_item_tokens, representations, vocabulary_for, Prompter, RisaTemplateSet};
use ilrec::reri::Recommender;
use ilrec::train::{training_checkpoint, StepLog, TrainConfig, Trainer};
use serde_json::json;

use crate::config::RunConfig;
use crate::data::{self, create_dir, load_prepared, require_dir, require_file, write_file, Prepared};
use crate::error::{CliError, CliResult};

fn tagged(dir: &Path, stem: &str, tag: &str, ext: &str) -> PathBuf {
    if tag.is_empty() {
        dir.join(format!("{stem}.{ext}"))
    } else {
        dir.join(format!("{stem}_{tag}.{ext}"))
    }
}

fn fmt_list(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn json_line(v: &serde_json::Value) -> String {
    format!("{}\n", serde_json::to_string_pretty(v).unwrap())
}

pub fn synth(cfg: &RunConfig) -> CliResult<()> {
    let spec = cfg.synthetic_spec()?;
    let out = cfg.path("data_dir");
    let data = synth_generate(&spec)?;
    create_dir(&out)?;
    write_interactions(out.join(data::INTERACTIONS), &data.records)?;
    ilrec::data::records::write_items(out.join(data::ITEMS), &data.items)?;
    let files = data.features.save_dir(out.join(data::FEATURES))?;
    let n_users = data
        .records
        .iter()
        .map(|r| r.user_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let manifest = json!({
        "n_users": n_users,
        "n_items": data.items.len(),
        "n_interactions": data.records.len(),
        "seed": spec.seed,
        "feature_files": files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect::<Vec<_>>(),
        "config_hash": cfg.hash(),
    });
    let text = json_line(&manifest);
    write_file(&out.join(data::MANIFEST), &text)?;
    print!("{text}");
    Ok(())
}

pub fn prepare(cfg: &RunConfig) -> CliResult<()> {
    let s = data::prepare(
        &cfg.path("data_dir"),
        &cfg.path("prepared_dir"),
        cfg.parse("k_core")?,
        cfg.parse("drop_images")?,
        cfg.parse("seed")?,
    )?;
    print!("{}", json_line(&s.manifest));
    Ok(())
}

/// Training log path: the `log` key, or `<checkpoint>.log.csv`.
pub fn log_path(cfg: &RunConfig) -> PathBuf {
    match cfg.get("log") {
        "" => suffixed(&cfg.path("checkpoint"), "log.csv"),
        p => PathBuf::from(p),
    }
}

pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let prep = load_prepared(&cfg.path("prepared_dir"))?;
    let templates = RisaTemplateSet::builtin();
    let trainer = Trainer::new(
        &prep.dataset,
        &prep.store,
        &templates,
        cfg.model_config()?,
        cfg.train_config()?,
    )?;
    println!(
        "training {} examples, {} batches per epoch, vocabulary {}",
        trainer.n_examples(),
        trainer.batches_per_epoch(),
        trainer.vocab.len()
    );
    let outcome = trainer.train()?;
    let ckpt_path = cfg.path("checkpoint");
    let ckpt = training_checkpoint(&outcome.best, &trainer.config, &trainer.vocab);
    if let Some(parent) = ckpt_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ckpt.save(&ckpt_path)?;
    let meta = cfg.meta();
    let rows: Vec<Vec<String>> = outcome.steps.iter().map(StepLog::csv_row).collect();
    let log = log_path(cfg);
    if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_csv(&log, &meta, &StepLog::HEADER, &rows)?;
    let epoch_rows: Vec<Vec<String>> = outcome
        .epochs
        .iter()
        .map(|e| vec![e.epoch.to_string(), e.val_hit5.to_string(), e.improved.to_string()])
        .collect();
    write_csv(suffixed(&ckpt_path, "epochs.csv"), &meta, &["epoch", "val_hit5", "improved"], &epoch_rows)?;
    for e in &outcome.epochs {
        println!("epoch {} val Hit@5 {:.4}{}", e.epoch, e.val_hit5, if e.improved { " *" } else { "" });
    }
    println!(
        "{} steps, best val Hit@5 {}, stopped early: {}, checkpoint {}",
        outcome.steps.len(),
        outcome.best_val_hit5.map_or("n/a".into(), |h| format!("{h:.4}")),
        outcome.stopped_early,
        ckpt_path.display()
    );
    Ok(())
}

/// A trained model with its training configuration. `fallback` and `budget`
/// come from the run config rather than the checkpoint.
pub struct LoadedRun {
    pub model: Model,
    pub train: TrainConfig,
    pub fingerprint: String,
}

pub fn load_run(path: &Path, cfg: &RunConfig) -> CliResult<LoadedRun> {
    require_file(path, "checkpoint")?;
    let c = Checkpoint::load(path)?;
    let mut train = TrainConfig::from_checkpoint(&c)?;
    train.fallback = cfg.parse("fallback")?;
    train.budget = cfg.budget()?;
    Ok(LoadedRun {
        model: Model::from_checkpoint(&c)?,
        train,
        fingerprint: c.get("vocab.fingerprint")?.to_string(),
    })
}

pub fn run_trainer<'a>(
    run: &LoadedRun,
    prep: &'a Prepared,
    templates: &'a RisaTemplateSet,
) -> CliResult<Trainer<'a>> {
    let t = Trainer::new(
        &prep.dataset,
        &prep.store,
        templates,
        run.model.config.clone(),
        run.train.clone(),
    )?;
    if t.vocab.fingerprint().to_string() != run.fingerprint {
        return Err(CliError::config(
            "checkpoint vocabulary does not match the prepared data",
        ));
    }
    Ok(t)
}

fn target(cfg: &RunConfig) -> CliResult<Target> {
    match cfg.get("target") {
        "test" => Ok(Target::Test),
        "validation" => Ok(Target::Validation),
        t => Err(CliError::config(format!("unknown target {t:?}; expected test or validation"))),
    }
}

fn join(v: impl IntoIterator<Item = String>) -> String {
    v.into_iter().collect::<Vec<_>>().join(";")
}

pub fn eval(cfg: &RunConfig) -> CliResult<()> {
    let name = cfg.get("scorer");
    let factory = scorers().get(name)?;
    let target = target(cfg)?;
    let ks = cfg.usize_list("ks")?;
    let seed: u64 = cfg.parse("seed")?;
    let negatives: usize = cfg.parse("negatives")?;
    let prep = load_prepared(&cfg.path("prepared_dir"))?;
    let templates = RisaTemplateSet::builtin();
    let run = if name == "model" {
        Some(load_run(&cfg.path("checkpoint"), cfg)?)
    } else {
        None
    };
    let trainer = run.as_ref().map(|r| run_trainer(r, &prep, &templates)).transpose()?;
    let recommender = match (&trainer, &run) {
        (Some(t), Some(r)) => Some(t.recommender(&r.model)),
        _ => None,
    };
    let env = ScorerEnv {
        recommender,
        records: &prep.dataset.records,
        seed,
    };
    let scorer = factory.build(&env)?;
    let ids = prep.dataset.catalog.ids();
    let mut report = evaluate(scorer.as_ref(), &prep.dataset.split.users, &ids, target, &ks, negatives, seed)?;
    let meta = cfg.meta();
    report.meta.extend(meta.clone());
    let dir = cfg.path("reports_dir");
    create_dir(&dir)?;
    let tag = cfg.get("tag");
    let rows: Vec<Vec<String>> = ks
        .iter()
        .enumerate()
        .map(|(i, k)| vec![k.to_string(), report.hit[i].to_string(), report.ndcg[i].to_string()])
        .collect();
    write_csv(tagged(&dir, "eval", tag, "csv"), &meta, &["k", "hit", "ndcg"], &rows)?;
    write_json(tagged(&dir, "eval", tag, "json"), &meta, &report)?;
    let user_rows: Vec<Vec<String>> = report
        .users
        .iter()
        .map(|u| {
            vec![
                u.user_id.clone(),
                u.truth.clone(),
                u.rank.to_string(),
                join(u.candidates.iter().cloned()),
                join(u.scores.iter().map(|s| s.to_string())),
            ]
        })
        .collect();
    write_csv(
        tagged(&dir, "eval_users", tag, "csv"),
        &meta,
        &["user_id", "truth", "rank", "candidates", "scores"],
        &user_rows,
    )?;
    let groups = popularity_groups(&prep.dataset.records, cfg.parse("groups")?);
    let by_group = group_eval(&report, &by_item_group(&groups));
    let mut header = vec!["group".to_string(), "n_users".to_string()];
    header.extend(ks.iter().map(|k| format!("hit@{k}")));
    header.extend(ks.iter().map(|k| format!("ndcg@{k}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let group_rows: Vec<Vec<String>> = by_group
        .iter()
        .map(|g| {
            let mut r = vec![g.group.to_string(), g.n_users.to_string()];
            r.extend(fmt_list(&g.hit));
            r.extend(fmt_list(&g.ndcg));
            r
        })
        .collect();
    write_csv(tagged(&dir, "eval_groups", tag, "csv"), &meta, &header_refs, &group_rows)?;
    for (i, k) in ks.iter().enumerate() {
        println!("Hit@{k} {:.4}  NDCG@{k} {:.4}", report.hit[i], report.ndcg[i]);
    }
    println!("{} users, scorer {}", report.n_users, scorer.name());
    Ok(())
}

pub fn overlap(cfg: &RunConfig) -> CliResult<()> {
    let raw = cfg.path("data_dir");
    require_dir(&raw, "data")?;
    let store = FeatureStore::load_dir(raw.join(data::FEATURES))?;
    let stats = overlap_report(
        store.require(FeatureType::Img)?,
        store.require(FeatureType::JointText)?,
        cfg.parse("seed")?,
    )?;
    let dir = cfg.path("reports_dir");
    create_dir(&dir)?;
    let meta = cfg.meta();
    let tag = cfg.get("tag");
    let mut rows = Vec::new();
    for (which, d) in [("positive", &stats.positive), ("negative", &stats.negative)] {
        for (start, count) in &d.histogram {
            rows.push(vec![which.to_string(), format!("{start:.2}"), count.to_string()]);
        }
    }
    write_csv(tagged(&dir, "overlap", tag, "csv"), &meta, &["pairs", "bin_start", "count"], &rows)?;
    write_json(tagged(&dir, "overlap", tag, "json"), &meta, &stats)?;
    println!(
        "positive mean {:.4} (n={}), negative mean {:.4}, gap {:.4}",
        stats.positive.mean, stats.positive.n, stats.negative.mean, stats.gap
    );
    Ok(())
}

struct LoadedModels<'a> {
    runs: Vec<LoadedRun>,
    trainers: Vec<Trainer<'a>>,
}

impl<'a> LoadedModels<'a> {
    fn load(cfg: &RunConfig, prep: &'a Prepared, templates: &'a RisaTemplateSet) -> CliResult<Self> {
        let mut paths = vec![cfg.path("checkpoint")];
        paths.extend(cfg.str_list("checkpoints").into_iter().map(PathBuf::from));
        let runs = paths.iter().map(|p| load_run(p, cfg)).collect::<CliResult<Vec<_>>>()?;
        let trainers = runs
            .iter()
            .map(|r| run_trainer(r, prep, templates))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(Self { runs, trainers })
    }

    fn recommenders(&self) -> Vec<Recommender<'_>> {
        self.trainers
            .iter()
            .zip(&self.runs)
            .map(|(t, r)| t.recommender(&r.model))
            .collect()
    }
}

fn bench_tokens(cfg: &RunConfig, prep: &Prepared, meta: &BTreeMap<String, String>) -> CliResult<serde_json::Value> {
    let dir = cfg.path("reports_dir");
    let tag = cfg.get("tag");
    let templates = RisaTemplateSet::builtin();
    let vocab = vocabulary_for(&prep.dataset.catalog, &templates, TrainConfig::default().max_vocab);
    let registry = representations();
    let users = &prep.dataset.split.users;
    let boundaries = cfg.usize_list("length_boundaries")?;
    let d_model = ilrec::nn::ModelConfig::default().backbone.d_model;
    let mut user_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut complexity_rows = Vec::new();
    let mut summary = Vec::new();
    let mut per_item_by_mode = Vec::new();
    for mode in cfg.str_list("bench_modes") {
        let repr = registry.get(&mode)?;
        let prompter = Prompter::new(&vocab, &prep.dataset.catalog, repr.as_ref());
        let hist = token_histogram(users, &prompter)?;
        for (u, n) in &hist.per_user {
            user_rows.push(vec![mode.clone(), u.clone(), n.to_string()]);
        }
        let mut content = Vec::new();
        for item in prep.dataset.catalog.items() {
            content.push(count_item_tokens(&vocab, repr.as_ref(), item)?.1);
        }
        let mean_content = content.iter().sum::<usize>() as f64 / content.len().max(1) as f64;
        let (lo, hi) = (content.iter().min().copied().unwrap_or(0), content.iter().max().copied().unwrap_or(0));
        summary_rows.push(vec![
            mode.clone(),
            hist.mean().to_string(),
            lo.to_string(),
            mean_content.to_string(),
            hi.to_string(),
        ]);
        summary.push(json!({
            "mode": mode,
            "mean_prompt_tokens": hist.mean(),
            "item_content_tokens": {"min": lo, "mean": mean_content, "max": hi},
            "histogram": hist.histogram,
        }));
        per_item_by_mode.push((mode.clone(), mean_content.round() as usize));
    }
    let base = per_item_by_mode.iter().find(|(m, _)| m == "image").map(|(_, t)| *t);
    for (mode, per_item) in &per_item_by_mode {
        for &len in &boundaries {
            let c = complexity_estimate(len, d_model, *per_item);
            let ratio = base.map_or(String::new(), |b| (c / complexity_estimate(len, d_model, b)).to_string());
            complexity_rows.push(vec![mode.clone(), len.to_string(), per_item.to_string(), c.to_string(), ratio]);
        }
    }
    let groups = length_groups(users, &boundaries);
    let group_rows: Vec<Vec<String>> = groups.iter().map(|(u, g)| vec![u.clone(), g.to_string()]).collect();
    write_csv(tagged(&dir, "tokens_users", tag, "csv"), meta, &["mode", "user_id", "tokens"], &user_rows)?;
    write_csv(
        tagged(&dir, "tokens", tag, "csv"),
        meta,
        &["mode", "mean_prompt_tokens", "item_tokens_min", "item_tokens_mean", "item_tokens_max"],
        &summary_rows,
    )?;
    write_csv(
        tagged(&dir, "complexity", tag, "csv"),
        meta,
        &["mode", "seq_len", "per_item_tokens", "complexity", "ratio_vs_image"],
        &complexity_rows,
    )?;
    write_csv(tagged(&dir, "length_groups", tag, "csv"), meta, &["user_id", "group"], &group_rows)?;
    for row in &summary_rows {
        println!("{:<20} mean prompt {:>9} tokens, item content {}..{}", row[0], format!("{:.1}", row[1].parse::<f64>().unwrap_or(0.0)), row[2], row[4]);
    }
    Ok(json!({ "modes": summary, "d_model": d_model }))
}

fn bench_timing(
    cfg: &RunConfig,
    prep: &Prepared,
    models: &LoadedModels<'_>,
    meta: &BTreeMap<String, String>,
) -> CliResult<serde_json::Value> {
    let recs = models.recommenders();
    let rows = timing_bench(
        &recs,
        &prep.dataset.split.users,
        &cfg.usize_list("length_boundaries")?,
        cfg.parse("group_size")?,
        &prep.dataset.catalog.ids(),
        cfg.parse("seed")?,
    )?;
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.mode.clone(),
                r.group.to_string(),
                r.group_start.to_string(),
                r.n_users.to_string(),
                r.token_total.to_string(),
                r.seconds.to_string(),
            ]
        })
        .collect();
    write_csv(
        tagged(&cfg.path("reports_dir"), "timing", cfg.get("tag"), "csv"),
        meta,
        &["mode", "group", "group_start", "n_users", "token_total", "seconds"],
        &csv,
    )?;
    for r in &rows {
        println!("{:<20} group {} ({} users): {} tokens, {:.3}s", r.mode, r.group_start, r.n_users, r.token_total, r.seconds);
    }
    Ok(serde_json::to_value(&rows).unwrap())
}

fn bench_sweep(
    cfg: &RunConfig,
    prep: &Prepared,
    models: &LoadedModels<'_>,
    meta: &BTreeMap<String, String>,
) -> CliResult<serde_json::Value> {
    let recs = models.recommenders();
    let mut budgets = vec![None];
    budgets.extend(cfg.usize_list("budgets")?.into_iter().map(Some));
    let ks = cfg.usize_list("ks")?;
    let rows = context_budget_sweep(
        &recs,
        &budgets,
        &prep.dataset.split.users,
        &prep.dataset.catalog.ids(),
        &ks,
        cfg.parse("negatives")?,
        cfg.parse("seed")?,
    )?;
    let mut header = vec!["mode".to_string(), "budget".to_string()];
    header.extend(ks.iter().map(|k| format!("hit@{k}")));
    header.extend(ks.iter().map(|k| format!("ndcg@{k}")));
    header.extend(["mean_retained".to_string(), "max_retained".to_string()]);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.mode.clone(), r.budget.map_or("none".into(), |b| b.to_string())];
            v.extend(fmt_list(&r.hit));
            v.extend(fmt_list(&r.ndcg));
            v.push(r.mean_retained.to_string());
            v.push(r.max_retained.to_string());
            v
        })
        .collect();
    write_csv(tagged(&cfg.path("reports_dir"), "sweep", cfg.get("tag"), "csv"), meta, &header_refs, &csv)?;
    for r in &rows {
        println!(
            "{:<20} budget {:>5}: Hit@{} {:.4}, retained mean {:.2} max {}",
            r.mode,
            r.budget.map_or("none".into(), |b| b.to_string()),
            ks[0],
            r.hit[0],
            r.mean_retained,
            r.max_retained
        );
    }
    Ok(serde_json::to_value(&rows).unwrap())
}

pub fn bench(cfg: &RunConfig) -> CliResult<()> {
    let kinds = cfg.str_list("bench");
    for k in &kinds {
        if !["tokens", "timing", "sweep"].contains(&k.as_str()) {
            return Err(CliError::config(format!("unknown bench {k:?}; expected tokens, timing or sweep")));
        }
    }
    let prep = load_prepared(&cfg.path("prepared_dir"))?;
    let templates = RisaTemplateSet::builtin();
    let needs_model = kinds.iter().any(|k| k != "tokens");
    let models = if needs_model {
        Some(LoadedModels::load(cfg, &prep, &templates)?)
    } else {
        None
    };
    let dir = cfg.path("reports_dir");
    create_dir(&dir)?;
    let meta = cfg.meta();
    let mut out = serde_json::Map::new();
    for k in &kinds {
        let v = match (k.as_str(), &models) {
            ("tokens", _) => bench_tokens(cfg, &prep, &meta)?,
            ("timing", Some(m)) => bench_timing(cfg, &prep, m, &meta)?,
            ("sweep", Some(m)) => bench_sweep(cfg, &prep, m, &meta)?,
            _ => unreachable!(),
        };
        out.insert(k.clone(), v);
    }
    write_json(tagged(&dir, "bench", cfg.get("tag"), "json"), &meta, &out)?;
    Ok(())
}

/// `summary.md` listing every JSON report in the reports directory.
pub fn report(cfg: &RunConfig) -> CliResult<()> {
    let dir = cfg.path("reports_dir");
    require_dir(&dir, "reports")?;
    let mut names: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    let mut md = String::from("# Report summary\n");
    for p in &names {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: not a report: {e}", p.display())))?;
        let meta = &v["meta"];
        md.push_str(&format!("\n## {}\n\n", p.file_name().unwrap().to_string_lossy()));
        md.push_str(&format!(
            "- command: {}\n- config hash: `{}`\n",
            meta["command"].as_str().unwrap_or("?"),
            meta["config_hash"].as_str().unwrap_or("?")
        ));
        if let Some(data) = v["data"].as_object() {
            for (k, val) in data {
                if val.is_number() || val.is_string() {
                    md.push_str(&format!("- {k}: {val}\n"));
                } else if val.is_array() && val.as_array().unwrap().iter().all(|x| x.is_number()) {
                    md.push_str(&format!("- {k}: {val}\n"));
                } else if let Some(mean) = val.get("mean") {
                    md.push_str(&format!("- {k} mean: {mean}\n"));
                }
            }
        }
    }
    let path = dir.join("summary.md");
    write_file(&path, &md)?;
    println!("{} reports summarized in {}", names.len(), path.display());
    Ok(())
}
