//! Interaction logs and item metadata: in-memory records plus the line-oriented
//! text formats they are stored in.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: u64,
}

impl InteractionRecord {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, timestamp: u64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            timestamp,
        }
    }
}

/// Catalog metadata for one item. `brand` and `category` together form the
/// attribute text; `has_image` mirrors whether an Img feature row exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub brand: String,
    pub category: String,
    pub description: String,
    pub image_ref: Option<String>,
    pub has_image: bool,
}

impl ItemRecord {
    pub fn attribute_text(&self) -> String {
        match (self.brand.is_empty(), self.category.is_empty()) {
            (false, false) => format!("{} {}", self.brand, self.category),
            (false, true) => self.brand.clone(),
            (true, false) => self.category.clone(),
            (true, true) => String::new(),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').collect()
    } else {
        line.split(',').collect()
    }
}

/// Parses an interaction log. Lines are `user<TAB>item<TAB>timestamp`; a comma
/// separator is accepted for lines without tabs. Blank lines are skipped.
pub fn parse_interactions(text: &str) -> Result<Vec<InteractionRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(line);
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty user or item id".into(),
            });
        }
        let timestamp = fields[2].trim().parse::<u64>().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad timestamp {:?}: {e}", fields[2]),
        })?;
        out.push(InteractionRecord::new(user, item, timestamp));
    }
    Ok(out)
}

pub fn ingest_interactions(path: impl AsRef<Path>) -> Result<Vec<InteractionRecord>> {
    parse_interactions(&read_to_string(path.as_ref())?)
}

pub fn write_interactions(path: impl AsRef<Path>, records: &[InteractionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = String::new();
    for r in records {
        buf.push_str(&format!("{}\t{}\t{}\n", r.user_id, r.item_id, r.timestamp));
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Item metadata: six tab-separated fields per line
/// (`item_id title brand category description image_ref`), image_ref may be empty.
pub fn parse_items(text: &str) -> Result<Vec<ItemRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "item id and title must be nonempty".into(),
            });
        }
        let image_ref = Some(fields[5].trim()).filter(|s| !s.is_empty()).map(str::to_string);
        out.push(ItemRecord {
            item_id: fields[0].to_string(),
            title: fields[1].to_string(),
            brand: fields[2].to_string(),
            category: fields[3].to_string(),
            description: fields[4].to_string(),
            has_image: image_ref.is_some(),
            image_ref,
        });
    }
    Ok(out)
}

pub fn ingest_items(path: impl AsRef<Path>) -> Result<Vec<ItemRecord>> {
    parse_items(&read_to_string(path.as_ref())?)
}

pub fn write_items(path: impl AsRef<Path>, items: &[ItemRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for it in items {
        writeln!(
            file,
            "{}\t{}\t{}\t{}\t{}\t{}",
            it.item_id,
            it.title,
            it.brand,
            it.category,
            it.description,
            it.image_ref.as_deref().unwrap_or("")
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_three_lines_in_order() {
        let recs = parse_interactions("u1\ti1\t5\nu2\ti2\t3\nu1\ti3\t1\n").unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0], InteractionRecord::new("u1", "i1", 5));
        assert_eq!(recs[2], InteractionRecord::new("u1", "i3", 1));
    }

    #[test]
    fn empty_file_gives_no_records() {
        assert!(parse_interactions("").unwrap().is_empty());
    }

    #[test]
    fn bad_timestamp_names_the_line() {
        match parse_interactions("u1,i1,notanumber") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest_interactions("/definitely/not/here.tsv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn item_metadata_allows_empty_image_ref() {
        let items = parse_items("a\tRed Shoe\tAcme\tShoes\tnice shoe\t\nb\tCap\tAcme\tHats\t\timg/b.jpg\n").unwrap();
        assert!(!items[0].has_image);
        assert!(items[1].has_image);
        assert_eq!(items[1].description, "");
        assert_eq!(items[0].attribute_text(), "Acme Shoes");
    }
}
