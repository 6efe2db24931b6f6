use std::collections::{BTreeMap, HashMap};

use crate::data::sampling::stable_hash;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const VISUAL: TokenId = 4;
pub const REC: TokenId = 5;

pub const RESERVED: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<unk>", "[VISUAL]", "[REC]"];

/// Lowercased word pieces; any non-alphanumeric character separates words and
/// is dropped.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Word-level vocabulary with six reserved ids at the front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Ranks corpus words by frequency (ties alphabetically) and keeps as many as
    /// fit in `max_size` after the reserved tokens.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for w in split_words(text) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size.saturating_sub(RESERVED.len());
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or("<unk>")
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split_words(text).map(|w| self.id(&w)).collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }

    /// Order-sensitive fingerprint, stored in checkpoints to catch mismatches.
    pub fn fingerprint(&self) -> u64 {
        let parts: Vec<&[u8]> = self.tokens.iter().map(|t| t.as_bytes()).collect();
        stable_hash(&parts)
    }
}
