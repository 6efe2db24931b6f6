//! Catalog data: interaction logs, item metadata, filtering, splitting,
//! candidate sampling, synthetic generation and feature-store I/O.

pub mod cf;
pub mod features;
pub mod records;
pub mod sampling;
pub mod sequence;
pub mod synth;

use std::collections::HashMap;

pub use cf::cf_pretrain_cooccurrence;
pub use features::{FeatureStore, FeatureTable, FeatureType};
pub use records::{ingest_interactions, ingest_items, InteractionRecord, ItemRecord};
pub use sampling::{popularity_groups, sample_candidates, sample_candidates_for, sample_negative, stable_hash, user_rng};
pub use sequence::{build_sequences, k_core_filter, leave_one_out, DatasetSplit, UserSequence, UserSplit};
pub use synth::{synth_generate, SyntheticData, SyntheticSpec};

use crate::error::{Error, Result};

/// Item metadata with an id index.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    items: Vec<ItemRecord>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(items: Vec<ItemRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, it) in items.iter().enumerate() {
            if index.insert(it.item_id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate item id {}", it.item_id)));
            }
        }
        Ok(Self { items, index })
    }

    pub fn get(&self, item_id: &str) -> Result<&ItemRecord> {
        self.index
            .get(item_id)
            .map(|&i| &self.items[i])
            .ok_or_else(|| Error::invalid(format!("unknown item {item_id}")))
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.item_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Restricts the catalog to items that appear in `keep`.
    pub fn retain(&self, keep: &dyn Fn(&str) -> bool) -> Catalog {
        Catalog::new(self.items.iter().filter(|i| keep(&i.item_id)).cloned().collect())
            .expect("subset of a valid catalog")
    }

    /// Marks items as image-less; the caller is expected to drop their Img rows.
    pub fn without_images(&self, drop: &dyn Fn(&str) -> bool) -> Catalog {
        let items = self
            .items
            .iter()
            .map(|i| {
                let mut i = i.clone();
                if drop(&i.item_id) {
                    i.has_image = false;
                    i.image_ref = None;
                }
                i
            })
            .collect();
        Catalog::new(items).expect("same ids as a valid catalog")
    }
}

/// A filtered, split dataset ready for training and evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: Catalog,
    pub records: Vec<InteractionRecord>,
    pub sequences: Vec<UserSequence>,
    pub split: DatasetSplit,
}

impl Dataset {
    /// k-core filter, chronological sequences, leave-one-out split. The catalog
    /// is narrowed to the items that survive filtering.
    pub fn prepare(records: &[InteractionRecord], items: Vec<ItemRecord>, k_core: usize) -> Result<Self> {
        let kept = k_core_filter(records, k_core);
        let sequences = build_sequences(&kept);
        let split = leave_one_out(&sequences)?;
        let live: std::collections::HashSet<&str> = kept.iter().map(|r| r.item_id.as_str()).collect();
        let full = Catalog::new(items)?;
        for id in &live {
            full.get(id)?;
        }
        let catalog = full.retain(&|id| live.contains(id));
        Ok(Self {
            catalog,
            records: kept,
            sequences,
            split,
        })
    }

    pub fn from_sequences(sequences: Vec<UserSequence>, catalog: Catalog) -> Result<Self> {
        let split = leave_one_out(&sequences)?;
        let mut records = Vec::new();
        for s in &sequences {
            for (t, item) in s.items.iter().enumerate() {
                catalog.get(item)?;
                records.push(InteractionRecord::new(s.user_id.clone(), item.clone(), t as u64));
            }
        }
        Ok(Self {
            catalog,
            records,
            sequences,
            split,
        })
    }
}
