//! CSV and JSON report writers. Every file starts with the run metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// `# key=value` header lines followed by `header` and `rows`.
pub fn csv_string(meta: &BTreeMap<String, String>, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(
    path: impl AsRef<Path>,
    meta: &BTreeMap<String, String>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, csv_string(meta, header, rows)).map_err(|e| Error::io(path, e))
}

/// `{"meta": {...}, "data": ...}`, pretty-printed.
pub fn json_string<T: Serialize>(meta: &BTreeMap<String, String>, data: &T) -> Result<String> {
    let v = serde_json::json!({ "meta": meta, "data": data });
    serde_json::to_string_pretty(&v).map_err(|e| Error::invalid(format!("json encoding failed: {e}")))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, meta: &BTreeMap<String, String>, data: &T) -> Result<()> {
    let path = path.as_ref();
    let mut s = json_string(meta, data)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Parses a CSV written by [`write_csv`]: metadata, header, rows.
pub fn read_csv(text: &str) -> (BTreeMap<String, String>, Vec<String>, Vec<Vec<String>>) {
    let mut meta = BTreeMap::new();
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(kv) = line.strip_prefix("# ") {
            if let Some((k, v)) = kv.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        } else if header.is_empty() {
            header = line.split(',').map(str::to_string).collect();
        } else if !line.is_empty() {
            rows.push(line.split(',').map(str::to_string).collect());
        }
    }
    (meta, header, rows)
}
