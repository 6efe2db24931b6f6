//! On-disk layout of raw and prepared datasets.
//!
//! Raw: `interactions.tsv`, `items.tsv`, `features/<type>.feat`.
//! Prepared: `sequences.tsv` (user id then item ids, tab separated, in
//! chronological order), `items.tsv`, `features/`, `manifest.json`.

use std::fs;
use std::path::Path;

use ilrec::data::records::{ingest_items, write_items};
use ilrec::data::{
    ingest_interactions, stable_hash, Catalog, Dataset, FeatureStore, FeatureType, UserSequence,
};
use serde_json::json;

use crate::error::{CliError, CliResult};

pub const INTERACTIONS: &str = "interactions.tsv";
pub const ITEMS: &str = "items.tsv";
pub const SEQUENCES: &str = "sequences.tsv";
pub const FEATURES: &str = "features";
pub const MANIFEST: &str = "manifest.json";

pub fn require_dir(dir: &Path, what: &str) -> CliResult<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::missing(format!("{what} directory {} not found", dir.display())))
    }
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(format!("{what} {} not found", path.display())))
    }
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Items whose image is dropped: the `fraction` of the catalog with the
/// smallest seeded hash.
pub fn images_to_drop(catalog: &Catalog, fraction: f64, seed: u64) -> Vec<String> {
    let mut keyed: Vec<(u64, &str)> = catalog
        .items()
        .iter()
        .filter(|i| i.has_image)
        .map(|i| (stable_hash(&[b"drop-image", &seed.to_le_bytes(), i.item_id.as_bytes()]), i.item_id.as_str()))
        .collect();
    keyed.sort();
    let n = ((catalog.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let mut out: Vec<String> = keyed.into_iter().take(n).map(|(_, id)| id.to_string()).collect();
    out.sort();
    out
}

pub struct Prepared {
    pub dataset: Dataset,
    pub store: FeatureStore,
}

pub struct PrepareSummary {
    pub manifest: serde_json::Value,
}

/// k-core, split and optional image removal; writes the prepared layout.
pub fn prepare(raw: &Path, out: &Path, k_core: usize, drop_images: f64, seed: u64) -> CliResult<PrepareSummary> {
    require_dir(raw, "data")?;
    require_file(&raw.join(INTERACTIONS), "interactions file")?;
    require_file(&raw.join(ITEMS), "items file")?;
    let records = ingest_interactions(raw.join(INTERACTIONS))?;
    let items = ingest_items(raw.join(ITEMS))?;
    let store = FeatureStore::load_dir(raw.join(FEATURES))?;
    let ds = Dataset::prepare(&records, items, k_core)?;
    let dropped = images_to_drop(&ds.catalog, drop_images, seed);
    let catalog = ds.catalog.without_images(&|id| dropped.binary_search(&id.to_string()).is_ok());
    let mut kept = FeatureStore::new();
    for kind in store.kinds().collect::<Vec<_>>() {
        let table = store.require(kind)?;
        let live = |id: &str| catalog.get(id).is_err();
        let t = if kind == FeatureType::Img {
            table.without(&|id| live(id) || dropped.binary_search(&id.to_string()).is_ok())
        } else {
            table.without(&live)
        };
        kept.insert(t)?;
    }
    create_dir(out)?;
    let mut seq = String::new();
    for s in &ds.sequences {
        seq.push_str(&s.user_id);
        for it in &s.items {
            seq.push('\t');
            seq.push_str(it);
        }
        seq.push('\n');
    }
    write_file(&out.join(SEQUENCES), seq)?;
    write_items(out.join(ITEMS), catalog.items())?;
    let files = kept.save_dir(out.join(FEATURES))?;
    let manifest = json!({
        "users": ds.split.users.len(),
        "items": catalog.len(),
        "interactions": ds.records.len(),
        "raw_interactions": records.len(),
        "k_core": k_core,
        "seed": seed,
        "images_dropped": dropped.len(),
        "feature_files": files.iter().map(|p| p.file_name().unwrap().to_string_lossy().to_string()).collect::<Vec<_>>(),
    });
    write_file(&out.join(MANIFEST), format!("{}\n", serde_json::to_string_pretty(&manifest).unwrap()))?;
    Ok(PrepareSummary { manifest })
}

fn parse_sequences(text: &str) -> CliResult<Vec<UserSequence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let user_id = parts.next().unwrap_or("").to_string();
        let items: Vec<String> = parts.map(str::to_string).collect();
        if user_id.is_empty() || items.is_empty() {
            return Err(CliError::config(format!("{SEQUENCES} line {}: expected user and items", i + 1)));
        }
        out.push(UserSequence { user_id, items });
    }
    Ok(out)
}

pub fn load_prepared(dir: &Path) -> CliResult<Prepared> {
    require_dir(dir, "prepared data")?;
    let seq_path = dir.join(SEQUENCES);
    require_file(&seq_path, "sequences file")?;
    let text = fs::read_to_string(&seq_path).map_err(|e| CliError::io(&seq_path, e))?;
    let sequences = parse_sequences(&text)?;
    let catalog = Catalog::new(ingest_items(dir.join(ITEMS))?)?;
    let dataset = Dataset::from_sequences(sequences, catalog)?;
    let store = FeatureStore::load_dir(dir.join(FEATURES))?;
    Ok(Prepared { dataset, store })
}
