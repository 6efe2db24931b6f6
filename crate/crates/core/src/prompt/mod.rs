//! Tokenization, item segments per representation mode, alignment question
//! templates and prompt plans.

pub mod plan;
pub mod repr;
pub mod templates;
pub mod vocab;

pub use plan::{validate_plan, PromptPlan, Prompter, RisaExample, Slot, SlotKind, REC_INSTRUCTION, TASK_PREAMBLE};
pub use repr::{count_item_tokens, representations, ItemRepresentation, ReprRegistry, Segment};
pub use templates::{Property, RisaTemplateSet, SUMMARIZATION_PROMPT};
pub use vocab::{TokenId, Vocabulary};

use crate::data::Catalog;

/// Default vocabulary corpus: all catalog text plus every fixed prompt string.
pub fn vocabulary_for(catalog: &Catalog, templates: &RisaTemplateSet, max_size: usize) -> Vocabulary {
    let mut corpus: Vec<String> = Vec::new();
    corpus.push(TASK_PREAMBLE.to_string());
    corpus.push(REC_INSTRUCTION.to_string());
    corpus.push("Title Visual Representation Brand Category Description".to_string());
    for t in templates.iter() {
        corpus.push(t.question.clone());
        corpus.push(t.answer.clone());
    }
    for it in catalog.items() {
        corpus.push(it.title.clone());
        corpus.push(it.brand.clone());
        corpus.push(it.category.clone());
        corpus.push(it.description.clone());
    }
    Vocabulary::build(corpus.iter().map(String::as_str), max_size)
}
