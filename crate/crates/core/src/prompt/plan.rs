//! Prompt plans: token ids plus the slot bookkeeping needed to inject item
//! features and the `[REC]` vector, and the supervision mask for alignment
//! targets.

use rand::Rng;

use crate::data::Catalog;
use crate::error::{Error, Result};
use crate::prompt::repr::{ItemRepresentation, Segment};
use crate::prompt::templates::{Property, RisaTemplateSet, TEMPLATES_PER_PROPERTY};
use crate::prompt::vocab::{TokenId, Vocabulary, REC, VISUAL};

/// Fixed task preamble opening every prompt.
pub const TASK_PREAMBLE: &str = "The user has interacted with the following items in order:";

pub const REC_INSTRUCTION: &str = "Generate a recommendation token for the next item to be consumed";

/// Longest supervised answer span, in tokens.
pub const RISA_TARGET_LIMIT: usize = 32;

const PROPERTY_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Visual,
    Rec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub position: usize,
    pub kind: SlotKind,
    pub item_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPlan {
    pub ids: Vec<TokenId>,
    pub slots: Vec<Slot>,
    pub target_mask: Vec<bool>,
    pub mode: &'static str,
    /// History items that survived context-budget truncation.
    pub items_retained: usize,
}

impl PromptPlan {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn visual_slots(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().filter(|s| s.kind == SlotKind::Visual)
    }

    pub fn rec_position(&self) -> Option<usize> {
        self.slots
            .iter()
            .find(|s| s.kind == SlotKind::Rec)
            .map(|s| s.position)
    }

    /// `(position, target id)` pairs under the mask.
    pub fn targets(&self) -> Vec<(usize, TokenId)> {
        self.target_mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(p, _)| (p, self.ids[p]))
            .collect()
    }

    fn push_text(&mut self, ids: &[TokenId], target: bool) {
        self.ids.extend_from_slice(ids);
        self.target_mask.extend(std::iter::repeat(target).take(ids.len()));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RisaExample {
    pub plan: PromptPlan,
    pub target_ids: Vec<TokenId>,
    pub target_text: String,
    pub property: Property,
    pub template: usize,
    pub next_item: String,
}

/// Builds prompts for one representation mode over one catalog.
#[derive(Clone, Copy)]
pub struct Prompter<'a> {
    pub vocab: &'a Vocabulary,
    pub catalog: &'a Catalog,
    pub repr: &'a dyn ItemRepresentation,
}

impl<'a> Prompter<'a> {
    pub fn new(vocab: &'a Vocabulary, catalog: &'a Catalog, repr: &'a dyn ItemRepresentation) -> Self {
        Self { vocab, catalog, repr }
    }

    pub fn build_item_segment(&self, item_id: &str) -> Result<Segment> {
        self.repr.render(self.vocab, self.catalog.get(item_id)?)
    }

    /// Preamble plus item segments, newest kept first, leaving room for
    /// `tail_len` more tokens within `budget`.
    fn history(&self, prefix: &[String], budget: Option<usize>, tail_len: usize) -> Result<PromptPlan> {
        if prefix.is_empty() {
            return Err(Error::invalid("history prompt needs at least one item"));
        }
        let preamble = self.vocab.tokenize(TASK_PREAMBLE);
        let segments = prefix
            .iter()
            .map(|id| self.build_item_segment(id))
            .collect::<Result<Vec<_>>>()?;
        let limit = budget.unwrap_or(usize::MAX);
        let mut used = preamble.len() + tail_len;
        let mut keep_from = segments.len();
        for (i, seg) in segments.iter().enumerate().rev() {
            if used + seg.ids.len() > limit {
                break;
            }
            used += seg.ids.len();
            keep_from = i;
        }
        if keep_from == segments.len() {
            return Err(Error::invalid(format!(
                "context budget {limit} cannot hold the scaffold ({}) plus one item segment ({})",
                preamble.len() + tail_len,
                segments.last().map_or(0, |s| s.ids.len())
            )));
        }
        let mut plan = PromptPlan {
            ids: Vec::with_capacity(used),
            slots: Vec::new(),
            target_mask: Vec::with_capacity(used),
            mode: self.repr.name(),
            items_retained: segments.len() - keep_from,
        };
        plan.push_text(&preamble, false);
        for (seg, item_id) in segments[keep_from..].iter().zip(&prefix[keep_from..]) {
            if let Some(at) = seg.visual_at {
                plan.slots.push(Slot {
                    position: plan.ids.len() + at,
                    kind: SlotKind::Visual,
                    item_id: Some(item_id.clone()),
                });
            }
            plan.push_text(&seg.ids, false);
        }
        Ok(plan)
    }

    pub fn build_history_prompt(&self, prefix: &[String], budget: Option<usize>) -> Result<PromptPlan> {
        self.history(prefix, budget, 0)
    }

    /// History, the recommendation instruction, then `[REC]` as the last token.
    pub fn build_rec_plan(&self, prefix: &[String], budget: Option<usize>) -> Result<PromptPlan> {
        let instruction = self.vocab.tokenize(REC_INSTRUCTION);
        let mut plan = self.history(prefix, budget, instruction.len() + 1)?;
        plan.push_text(&instruction, false);
        plan.slots.push(Slot {
            position: plan.ids.len(),
            kind: SlotKind::Rec,
            item_id: None,
        });
        plan.push_text(&[REC], false);
        Ok(plan)
    }

    /// Samples a property (resampling empty ones) and one of its templates.
    pub fn sample_template<R: Rng + ?Sized>(
        &self,
        templates: &RisaTemplateSet,
        next_item: &str,
        rng: &mut R,
    ) -> Result<usize> {
        let item = self.catalog.get(next_item)?;
        if Property::ALL.iter().all(|p| p.value(item).trim().is_empty()) {
            return Err(Error::invalid(format!("item {next_item} has no nonempty property")));
        }
        for _ in 0..PROPERTY_RETRIES {
            let property = Property::ALL[rng.gen_range(0..Property::ALL.len())];
            let k = rng.gen_range(0..TEMPLATES_PER_PROPERTY);
            if !property.value(item).trim().is_empty() {
                return Ok(templates.index_of(property, k));
            }
        }
        Err(Error::invalid(format!(
            "no nonempty property drawn for item {next_item} in {PROPERTY_RETRIES} tries"
        )))
    }

    /// History, the rendered question, and the answer span under the mask.
    pub fn build_risa_with_template(
        &self,
        templates: &RisaTemplateSet,
        prefix: &[String],
        next_item: &str,
        template: usize,
        budget: Option<usize>,
    ) -> Result<RisaExample> {
        let item = self.catalog.get(next_item)?;
        let t = templates.get(template);
        let (question, answer) = t.render(item);
        let q_ids = self.vocab.tokenize(&question);
        let mut target_ids = self.vocab.tokenize(&answer);
        target_ids.truncate(RISA_TARGET_LIMIT);
        if target_ids.is_empty() {
            return Err(Error::invalid(format!("empty {} target for {next_item}", t.property)));
        }
        let mut plan = self.history(prefix, budget, q_ids.len() + target_ids.len())?;
        plan.push_text(&q_ids, false);
        plan.push_text(&target_ids, true);
        Ok(RisaExample {
            plan,
            target_ids,
            target_text: answer,
            property: t.property,
            template,
            next_item: next_item.to_string(),
        })
    }

    pub fn build_risa_pair<R: Rng + ?Sized>(
        &self,
        templates: &RisaTemplateSet,
        prefix: &[String],
        next_item: &str,
        budget: Option<usize>,
        rng: &mut R,
    ) -> Result<RisaExample> {
        let template = self.sample_template(templates, next_item, rng)?;
        self.build_risa_with_template(templates, prefix, next_item, template, budget)
    }
}

/// Checks the slot invariants: slot tokens match their kind, `[REC]` is last.
pub fn validate_plan(plan: &PromptPlan) -> Result<()> {
    if plan.ids.len() != plan.target_mask.len() {
        return Err(Error::invalid("target mask length differs from plan length"));
    }
    let mut recs = 0;
    for s in &plan.slots {
        let want = match s.kind {
            SlotKind::Visual => VISUAL,
            SlotKind::Rec => REC,
        };
        if plan.ids.get(s.position) != Some(&want) {
            return Err(Error::invalid(format!("slot at {} holds the wrong token", s.position)));
        }
        if s.kind == SlotKind::Rec {
            recs += 1;
            if s.position + 1 != plan.ids.len() {
                return Err(Error::invalid("[REC] slot is not the final position"));
            }
        }
    }
    if recs > 1 {
        return Err(Error::invalid("more than one [REC] slot"));
    }
    Ok(())
}
