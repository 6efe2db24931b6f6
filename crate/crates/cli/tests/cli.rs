use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const SMALL: &[&str] = &[
    "--n_users", "60", "--n_items", "40", "--mean_seq_len", "6", "--max_seq_len", "8", "--description_tokens", "24",
];
const TINY: &[&str] = &[
    "--d_model", "16", "--n_heads", "2", "--d_ff", "32", "--adaptor_hidden", "32", "--d_shared", "8",
    "--epochs", "1", "--batch_size", "16", "--val_negatives", "20", "--max_context", "1024",
];

fn ilrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ilrec"))
        .current_dir(dir)
        .env("ILR_THREADS", "2")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = ilrec(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn with(base: &[&str], extra: &[&'static str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn hash_dir(dir: &Path) -> String {
    let mut files: Vec<_> = walk(dir);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
        h.update(fs::read(&f).unwrap());
    }
    hex::encode(h.finalize())
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn small_pipeline(dir: &Path) {
    ok(dir, &args(&with(&["synth"], SMALL)));
    ok(dir, &["prepare", "--k_core", "3"]);
}

#[test]
fn help_lists_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ilrec(tmp.path(), &["train", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["--lr", "[default: 0.001]", "--types", "--cuts", "--config"] {
        assert!(text.contains(needle), "missing {needle}");
    }
    let top = ilrec(tmp.path(), &["--help"]);
    assert_eq!(code(&top), 0);
    for sub in ["synth", "prepare", "train", "eval", "overlap", "bench", "report"] {
        assert!(String::from_utf8_lossy(&top.stdout).contains(sub));
    }
}

#[test]
fn usage_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ilrec(tmp.path(), &["train", "--no_such_key", "1"])), 3);
    assert_eq!(code(&ilrec(tmp.path(), &["train", "--types", "img,zz"])), 3);
    assert_eq!(code(&ilrec(tmp.path(), &["frobnicate"])), 3);
    assert_eq!(code(&ilrec(tmp.path(), &["synth", "--config", "absent.cfg"])), 3);
}

#[test]
fn unwritable_output_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("blocker"), "x").unwrap();
    let o = ilrec(tmp.path(), &args(&with(&["synth", "--data_dir", "blocker/data"], SMALL)));
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_inputs_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&ilrec(dir, &["prepare"])), 3);
    small_pipeline(dir);
    let o = ilrec(dir, &["eval", "--checkpoint", "nowhere.ckpt"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.ckpt"));
    fs::remove_file(dir.join("prepared/features/cf.feat")).unwrap();
    let o = ilrec(dir, &args(&with(&["train", "--types", "img,cf"], TINY)));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.join("runs").exists());
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("run.cfg"), "n_users = 70\nn_items = 40\nseed = 3\nepochs = 9\n").unwrap();
    let out = ok(dir, &["synth", "--config", "run.cfg", "--n_users", "50", "--max_seq_len", "8"]);
    let m: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(m["seed"], 3);
    assert_eq!(m["n_items"], 40);
    assert!(m["n_users"].as_u64().unwrap() <= 50);
}

#[test]
fn same_seed_synth_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    ok(a.path(), &args(&with(&["synth"], SMALL)));
    ok(b.path(), &args(&with(&["synth"], SMALL)));
    ok(c.path(), &args(&with(&["synth", "--seed", "8"], SMALL)));
    let h = |d: &Path| hash_dir(&d.join("data"));
    assert_eq!(h(a.path()), h(b.path()));
    assert_ne!(h(a.path()), h(c.path()));
}

#[test]
fn full_pipeline_writes_every_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_pipeline(dir);
    let out = ok(dir, &args(&with(&["train", "--types", "img,cf,text"], TINY)));
    assert!(out.contains("best val Hit@5"));
    assert!(dir.join("runs/model.ckpt").exists());
    let log = fs::read_to_string(dir.join("runs/model.ckpt.log.csv")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("step,L_final,L_RISA")));
    ok(dir, &["eval", "--negatives", "20"]);
    ok(dir, &["eval", "--scorer", "popularity", "--negatives", "20", "--tag", "pop"]);
    ok(dir, &["overlap"]);
    ok(dir, &["bench", "--bench", "tokens,timing,sweep", "--negatives", "20", "--budgets", "256", "--group_size", "3"]);
    ok(dir, &["report"]);
    for f in [
        "eval.csv", "eval.json", "eval_users.csv", "eval_groups.csv", "eval_pop.csv", "overlap.csv", "overlap.json",
        "tokens.csv", "complexity.csv", "timing.csv", "sweep.csv", "bench.json", "summary.md",
    ] {
        assert!(dir.join("reports").join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(dir.join("reports/eval.csv")).unwrap();
    assert!(csv.contains("config_hash"));
    let o = ilrec(dir, &["eval", "--negatives", "1000"]);
    assert_ne!(code(&o), 0);
}
