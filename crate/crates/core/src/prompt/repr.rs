//! Item representation modes. Each mode renders an item as a prompt segment;
//! modes are looked up by name so the run configuration can pick one.

use std::sync::Arc;

use crate::data::records::ItemRecord;
use crate::error::{Error, Result};
use crate::prompt::vocab::{TokenId, Vocabulary, VISUAL};
use crate::registry::Registry;

/// One item's rendered token span. `visual_at` is the offset of the `[VISUAL]`
/// placeholder within `ids`, when the mode uses one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub ids: Vec<TokenId>,
    pub visual_at: Option<usize>,
}

pub trait ItemRepresentation: Send + Sync {
    fn name(&self) -> &'static str;

    fn uses_visual(&self) -> bool;

    fn render(&self, vocab: &Vocabulary, item: &ItemRecord) -> Result<Segment>;

    /// Tokens spent on the item's content, excluding the shared title scaffold.
    fn content_tokens(&self, vocab: &Vocabulary, item: &ItemRecord) -> usize;
}

fn title_part(item: &ItemRecord) -> String {
    format!("Title: {}", item.title)
}

fn visual_segment(vocab: &Vocabulary, item: &ItemRecord, tail: Option<&str>) -> Segment {
    let mut ids = vocab.tokenize(&format!("{}, Visual Representation:", title_part(item)));
    let at = ids.len();
    ids.push(VISUAL);
    if let Some(t) = tail {
        ids.extend(vocab.tokenize(t));
    }
    Segment {
        ids,
        visual_at: Some(at),
    }
}

fn require_description(item: &ItemRecord) -> Result<()> {
    if item.description.trim().is_empty() {
        return Err(Error::invalid(format!(
            "item {} has no description to render",
            item.item_id
        )));
    }
    Ok(())
}

pub struct ImageRepr;

impl ItemRepresentation for ImageRepr {
    fn name(&self) -> &'static str {
        "image"
    }

    fn uses_visual(&self) -> bool {
        true
    }

    fn render(&self, vocab: &Vocabulary, item: &ItemRecord) -> Result<Segment> {
        Ok(visual_segment(vocab, item, None))
    }

    fn content_tokens(&self, _: &Vocabulary, _: &ItemRecord) -> usize {
        1
    }
}

pub struct AttributeRepr;

impl ItemRepresentation for AttributeRepr {
    fn name(&self) -> &'static str {
        "attribute"
    }

    fn uses_visual(&self) -> bool {
        false
    }

    fn render(&self, vocab: &Vocabulary, item: &ItemRecord) -> Result<Segment> {
        let text = format!(
            "{}, Brand: {}, Category: {}",
            title_part(item),
            item.brand,
            item.category
        );
        Ok(Segment {
            ids: vocab.tokenize(&text),
            visual_at: None,
        })
    }

    fn content_tokens(&self, vocab: &Vocabulary, item: &ItemRecord) -> usize {
        vocab.tokenize(&item.attribute_text()).len()
    }
}

pub struct DescriptionRepr;

impl ItemRepresentation for DescriptionRepr {
    fn name(&self) -> &'static str {
        "description"
    }

    fn uses_visual(&self) -> bool {
        false
    }

    fn render(&self, vocab: &Vocabulary, item: &ItemRecord) -> Result<Segment> {
        require_description(item)?;
        let text = format!("{}, Description: {}", title_part(item), item.description);
        Ok(Segment {
            ids: vocab.tokenize(&text),
            visual_at: None,
        })
    }

    fn content_tokens(&self, vocab: &Vocabulary, item: &ItemRecord) -> usize {
        vocab.tokenize(&item.description).len()
    }
}

/// Visual slot followed by the full description.
pub struct ImageDescriptionRepr;

impl ItemRepresentation for ImageDescriptionRepr {
    fn name(&self) -> &'static str {
        "image+description"
    }

    fn uses_visual(&self) -> bool {
        true
    }

    fn render(&self, vocab: &Vocabulary, item: &ItemRecord) -> Result<Segment> {
        require_description(item)?;
        Ok(visual_segment(
            vocab,
            item,
            Some(&format!(", Description: {}", item.description)),
        ))
    }

    fn content_tokens(&self, vocab: &Vocabulary, item: &ItemRecord) -> usize {
        1 + vocab.tokenize(&item.description).len()
    }
}

pub type ReprRegistry = Registry<dyn ItemRepresentation>;

/// Registry holding the four built-in modes.
pub fn representations() -> ReprRegistry {
    let mut reg: ReprRegistry = Registry::new("representation mode");
    let builtin: [Arc<dyn ItemRepresentation>; 4] = [
        Arc::new(ImageRepr),
        Arc::new(AttributeRepr),
        Arc::new(DescriptionRepr),
        Arc::new(ImageDescriptionRepr),
    ];
    for r in builtin {
        reg.register(r.name(), r);
    }
    reg
}

/// `(total segment length, content-only tokens)` for one item.
pub fn count_item_tokens(
    vocab: &Vocabulary,
    repr: &dyn ItemRepresentation,
    item: &ItemRecord,
) -> Result<(usize, usize)> {
    let seg = repr.render(vocab, item)?;
    Ok((seg.ids.len(), repr.content_tokens(vocab, item)))
}
