//! Per-type item feature matrices and their binary file format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! b"ILRFEAT1" | tag: u8 | n_items: u32 | dim: u32
//! n_items x (len: u32 | utf-8 item id)
//! n_items x dim x f32 (row-major)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"ILRFEAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureType {
    Img,
    Cf,
    Text,
    /// Description embedding in the same space as `Img`.
    JointText,
}

impl FeatureType {
    pub const ALL: [FeatureType; 4] = [
        FeatureType::Img,
        FeatureType::Cf,
        FeatureType::Text,
        FeatureType::JointText,
    ];

    /// Types that can drive a retrieval head.
    pub const RETRIEVAL: [FeatureType; 3] = [FeatureType::Img, FeatureType::Cf, FeatureType::Text];

    pub fn tag(self) -> u8 {
        match self {
            FeatureType::Img => 0,
            FeatureType::Cf => 1,
            FeatureType::Text => 2,
            FeatureType::JointText => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureType::Img => "img",
            FeatureType::Cf => "cf",
            FeatureType::Text => "text",
            FeatureType::JointText => "jointtext",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.feat", self.name())
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureType::Img => "Img",
            FeatureType::Cf => "CF",
            FeatureType::Text => "Text",
            FeatureType::JointText => "JointText",
        })
    }
}

impl FromStr for FeatureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "img" | "image" => Ok(FeatureType::Img),
            "cf" => Ok(FeatureType::Cf),
            "text" => Ok(FeatureType::Text),
            "jointtext" | "joint_text" | "joint-text" => Ok(FeatureType::JointText),
            other => Err(Error::Config(format!("unknown feature type {other:?}"))),
        }
    }
}

/// Parses a comma-separated type list such as `img,cf,text`.
pub fn parse_feature_types(s: &str) -> Result<Vec<FeatureType>> {
    let mut out: Vec<FeatureType> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    kind: FeatureType,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl FeatureTable {
    pub fn new(kind: FeatureType, dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite {kind} feature for item {id}")));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::invalid(format!("duplicate item id {id} in {kind} table")));
            }
            ids.push(id);
            data.extend_from_slice(&row);
        }
        Ok(Self {
            kind,
            dim,
            ids,
            index,
            data,
        })
    }

    pub fn kind(&self) -> FeatureType {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, item_id: &str) -> Option<&[f32]> {
        self.index
            .get(item_id)
            .map(|&r| &self.data[r * self.dim..(r + 1) * self.dim])
    }

    pub fn row_at(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    /// Drops the rows of the given items, keeping the others in order.
    pub fn without(&self, drop: &dyn Fn(&str) -> bool) -> FeatureTable {
        let rows = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| !drop(id))
            .map(|(r, id)| (id.clone(), self.row_at(r).to_vec()))
            .collect();
        FeatureTable::new(self.kind, self.dim, rows).expect("subset of a valid table")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + self.data.len() * 4 + self.ids.len() * 12);
        out.extend_from_slice(FEATURE_MAGIC);
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(8, "magic")?;
        if magic != FEATURE_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {:?}", String::from_utf8_lossy(magic)),
            });
        }
        let tag_off = cur.pos;
        let tag = cur.take(1, "type tag")?[0];
        let kind = FeatureType::from_tag(tag).ok_or(Error::Format {
            offset: tag_off as u64,
            message: format!("unknown type tag {tag}"),
        })?;
        let n_items = cur.u32("n_items")? as usize;
        let dim = cur.u32("dim")? as usize;
        let mut ids = Vec::with_capacity(n_items.min(1 << 20));
        for _ in 0..n_items {
            let len = cur.u32("item id length")? as usize;
            let off = cur.pos;
            let raw = cur.take(len, "item id")?;
            let id = std::str::from_utf8(raw).map_err(|_| Error::Format {
                offset: off as u64,
                message: "item id is not utf-8".into(),
            })?;
            ids.push(id.to_string());
        }
        let payload_off = cur.pos;
        let need = n_items * dim * 4;
        let remaining = bytes.len() - payload_off;
        if remaining < need {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                message: format!(
                    "truncated payload: header declares {n_items}x{dim} values ({need} bytes), found {remaining} bytes"
                ),
            });
        }
        if remaining > need {
            return Err(Error::Format {
                offset: (payload_off + need) as u64,
                message: format!("{} trailing bytes after payload", remaining - need),
            });
        }
        let mut data = Vec::with_capacity(n_items * dim);
        for (k, chunk) in bytes[payload_off..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::Format {
                    offset: (payload_off + 4 * k) as u64,
                    message: "non-finite feature value".into(),
                });
            }
            data.push(v);
        }
        let mut index = HashMap::with_capacity(n_items);
        for (r, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), r).is_some() {
                return Err(Error::Format {
                    offset: 17,
                    message: format!("duplicate item id {id}"),
                });
            }
        }
        Ok(Self {
            kind,
            dim,
            ids,
            index,
            data,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_feature_table(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_feature_table(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::from_bytes(&bytes)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    tables: BTreeMap<FeatureType, FeatureTable>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: FeatureTable) -> Result<()> {
        if table.kind == FeatureType::JointText {
            if let Some(img) = self.tables.get(&FeatureType::Img) {
                if img.dim != table.dim {
                    return Err(Error::DimensionMismatch {
                        expected: img.dim,
                        actual: table.dim,
                    });
                }
            }
        }
        if table.kind == FeatureType::Img {
            if let Some(jt) = self.tables.get(&FeatureType::JointText) {
                if jt.dim != table.dim {
                    return Err(Error::DimensionMismatch {
                        expected: jt.dim,
                        actual: table.dim,
                    });
                }
            }
        }
        self.tables.insert(table.kind, table);
        Ok(())
    }

    pub fn get(&self, kind: FeatureType) -> Option<&FeatureTable> {
        self.tables.get(&kind)
    }

    pub fn require(&self, kind: FeatureType) -> Result<&FeatureTable> {
        self.get(kind)
            .ok_or_else(|| Error::MissingFeatureType(kind.to_string()))
    }

    pub fn row(&self, kind: FeatureType, item_id: &str) -> Option<&[f32]> {
        self.tables.get(&kind).and_then(|t| t.row(item_id))
    }

    pub fn dim(&self, kind: FeatureType) -> Option<usize> {
        self.tables.get(&kind).map(|t| t.dim)
    }

    pub fn kinds(&self) -> impl Iterator<Item = FeatureType> + '_ {
        self.tables.keys().copied()
    }

    /// Writes one `<type>.feat` file per table into `dir`.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for table in self.tables.values() {
            let path = dir.join(table.kind.file_name());
            save_feature_table(table, &path)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Loads every `<type>.feat` file present in `dir`; absent types are skipped.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "feature directory not found"),
            ));
        }
        let mut store = FeatureStore::new();
        for kind in FeatureType::ALL {
            let path = dir.join(kind.file_name());
            if path.exists() {
                let table = load_feature_table(&path)?;
                if table.kind != kind {
                    return Err(Error::Format {
                        offset: 8,
                        message: format!("{} holds a {} table", path.display(), table.kind),
                    });
                }
                store.insert(table)?;
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> FeatureTable {
        let rows = (0..3)
            .map(|r| (format!("item{r}"), (0..4).map(|c| (r * 4 + c) as f32 * 0.25 - 1.0).collect()))
            .collect();
        FeatureTable::new(FeatureType::Img, 4, rows).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = small();
        let bytes = t.to_bytes();
        let back = FeatureTable::from_bytes(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.row("item2").unwrap(), t.row("item2").unwrap());
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = small().to_bytes();
        assert_eq!(&bytes[..8], b"ILRFEAT1");
        assert_eq!(bytes[8], 0);
        assert_eq!(&bytes[9..13], &3u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &4u32.to_le_bytes());
        assert_eq!(&bytes[17..21], &5u32.to_le_bytes());
        assert_eq!(&bytes[21..26], b"item0");
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = small().to_bytes();
        bytes[0] = b'X';
        match FeatureTable::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_row_is_truncation() {
        let rows = (0..10).map(|r| (format!("i{r}"), vec![r as f32; 2])).collect();
        let mut bytes = FeatureTable::new(FeatureType::Cf, 2, rows).unwrap().to_bytes();
        bytes.truncate(bytes.len() - 8);
        let err = FeatureTable::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn joint_text_must_share_img_dim() {
        let mut store = FeatureStore::new();
        store.insert(small()).unwrap();
        let jt = FeatureTable::new(FeatureType::JointText, 3, vec![("a".into(), vec![0.0; 3])]).unwrap();
        assert!(store.insert(jt).is_err());
    }

    #[test]
    fn store_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = FeatureStore::new();
        store.insert(small()).unwrap();
        store
            .insert(FeatureTable::new(FeatureType::Text, 2, vec![("item0".into(), vec![0.5, -0.5])]).unwrap())
            .unwrap();
        store.save_dir(dir.path()).unwrap();
        assert_eq!(FeatureStore::load_dir(dir.path()).unwrap(), store);
    }

    proptest! {
        #[test]
        fn arbitrary_tables_round_trip(
            dim in 1usize..6,
            vals in prop::collection::vec(-1e6f32..1e6, 0..40),
            tag in 0u8..4,
        ) {
            let n = vals.len() / dim;
            let rows = (0..n).map(|r| (format!("id-{r}"), vals[r * dim..(r + 1) * dim].to_vec())).collect();
            let t = FeatureTable::new(FeatureType::from_tag(tag).unwrap(), dim, rows).unwrap();
            let back = FeatureTable::from_bytes(&t.to_bytes()).unwrap();
            for r in 0..n {
                let a: Vec<u32> = t.row_at(r).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = back.row_at(r).iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
            prop_assert_eq!(back, t);
        }
    }
}
