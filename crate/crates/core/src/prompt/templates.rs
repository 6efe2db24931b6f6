//! Next-item property question templates and the stored description
//! summarization prompt.

use std::fmt;
use std::str::FromStr;

use crate::data::records::ItemRecord;
use crate::error::{Error, Result};

pub const BUILTIN_TEMPLATES: &str = include_str!("../../assets/risa_templates.tsv");

/// Prompt used upstream to condense long descriptions. Shipped as data only.
pub const SUMMARIZATION_PROMPT: &str = include_str!("../../assets/summarization_prompt.txt");

pub const TEMPLATES_PER_PROPERTY: usize = 5;
pub const TEMPLATE_COUNT: usize = 4 * TEMPLATES_PER_PROPERTY;

const ANSWER_SEPARATOR: &str = " => ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    Brand,
    Category,
    Title,
    Description,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::Brand,
        Property::Category,
        Property::Title,
        Property::Description,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Brand => "brand",
            Property::Category => "category",
            Property::Title => "title",
            Property::Description => "description",
        }
    }

    fn marker(self) -> &'static str {
        match self {
            Property::Brand => "{BRAND}",
            Property::Category => "{CATEGORY}",
            Property::Title => "{TITLE}",
            Property::Description => "{DESCRIPTION}",
        }
    }

    pub fn value(self, item: &ItemRecord) -> &str {
        match self {
            Property::Brand => &item.brand,
            Property::Category => &item.category,
            Property::Title => &item.title,
            Property::Description => &item.description,
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown property {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RisaTemplate {
    pub property: Property,
    pub question: String,
    pub answer: String,
}

impl RisaTemplate {
    /// `(question, answer)` with the item's property filled in.
    pub fn render(&self, item: &ItemRecord) -> (String, String) {
        let marker = self.property.marker();
        let value = self.property.value(item);
        (
            self.question.replace(marker, value),
            self.answer.replace(marker, value),
        )
    }
}

/// Exactly five templates for each of brand, category, title and description,
/// grouped by property in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RisaTemplateSet {
    templates: Vec<RisaTemplate>,
}

impl RisaTemplateSet {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TEMPLATES).expect("bundled template file is valid")
    }

    /// Parses `property<TAB>question => answer` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut templates = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let (prop, body) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected property<TAB>template".into()))?;
            let property: Property = prop.parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let (question, answer) = body
                .split_once(ANSWER_SEPARATOR)
                .ok_or_else(|| parse_err(format!("template lacks {ANSWER_SEPARATOR:?}")))?;
            if question.trim().is_empty() || !answer.contains(property.marker()) {
                return Err(parse_err(format!(
                    "template needs a question and an answer containing {}",
                    property.marker()
                )));
            }
            templates.push(RisaTemplate {
                property,
                question: question.trim().to_string(),
                answer: answer.trim().to_string(),
            });
        }
        templates.sort_by_key(|t| t.property);
        for p in Property::ALL {
            let n = templates.iter().filter(|t| t.property == p).count();
            if n != TEMPLATES_PER_PROPERTY {
                return Err(Error::Config(format!(
                    "property {p} has {n} templates, expected {TEMPLATES_PER_PROPERTY}"
                )));
            }
        }
        Ok(Self { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, index: usize) -> &RisaTemplate {
        &self.templates[index]
    }

    /// Global index of the `k`-th template for `property`.
    pub fn index_of(&self, property: Property, k: usize) -> usize {
        let base = Property::ALL.iter().position(|&p| p == property).unwrap_or(0);
        base * TEMPLATES_PER_PROPERTY + k
    }

    pub fn iter(&self) -> impl Iterator<Item = &RisaTemplate> {
        self.templates.iter()
    }
}
