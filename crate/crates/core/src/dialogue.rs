//! Dialogues, the flattened token index space, spans and the vocabulary.
//!
//! Every downstream structure (coreference spans, graphs, attention
//! matrices, encoder rows) is indexed by the positions produced by
//! [`flatten_dialogue`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    #[serde(default)]
    pub text: String,
}

impl Turn {
    pub fn new(speaker: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Self {
        Self {
            id: id.into(),
            turns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::EmptyDialogue);
        }
        for (k, turn) in self.turns.iter().enumerate() {
            if turn.speaker.contains('\n') {
                return Err(Error::InvalidDialogue(format!(
                    "turn {k}: speaker contains a newline"
                )));
            }
            if turn.speaker.trim().is_empty() {
                return Err(Error::InvalidDialogue(format!("turn {k}: empty speaker")));
            }
        }
        Ok(())
    }

    /// Distinct speaker tokens in order of first appearance.
    pub fn speaker_tokens(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for turn in &self.turns {
            let tok = speaker_token(&turn.speaker);
            if !seen.contains(&tok) {
                seen.push(tok);
            }
        }
        seen
    }

    /// `"Speaker: text"` lines with the speaker in token form and the text
    /// whitespace-normalized.
    pub fn render_lines(&self) -> Vec<String> {
        self.turns
            .iter()
            .map(|t| {
                let words: Vec<&str> = t.text.split_whitespace().collect();
                render_line(&speaker_token(&t.speaker), &words)
            })
            .collect()
    }
}

fn render_line<S: AsRef<str>>(speaker: &str, words: &[S]) -> String {
    let mut line = format!("{speaker}:");
    for w in words {
        line.push(' ');
        line.push_str(w.as_ref());
    }
    line
}

/// Collapses a (possibly multi-word) speaker name into one token.
pub fn speaker_token(speaker: &str) -> String {
    speaker.split_whitespace().collect::<Vec<_>>().join("_")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub turn_offsets: Vec<usize>,
    pub speaker_positions: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Inverse of the flattening rule: one `"Speaker: text"` line per turn.
    pub fn detokenize(&self) -> Vec<String> {
        let mut lines = Vec::with_capacity(self.turn_offsets.len());
        for (k, &start) in self.turn_offsets.iter().enumerate() {
            let end = self
                .turn_offsets
                .get(k + 1)
                .copied()
                .unwrap_or(self.tokens.len());
            // skip the speaker token and the ":" separator
            lines.push(render_line(
                &self.tokens[start],
                &self.tokens[start + 2..end],
            ));
        }
        lines
    }
}

pub fn flatten_dialogue(d: &Dialogue) -> Result<TokenSequence> {
    d.validate()?;
    let mut tokens = Vec::new();
    let mut turn_offsets = Vec::with_capacity(d.turns.len());
    for turn in &d.turns {
        turn_offsets.push(tokens.len());
        tokens.push(speaker_token(&turn.speaker));
        tokens.push(":".to_string());
        tokens.extend(turn.text.split_whitespace().map(str::to_string));
    }
    Ok(TokenSequence {
        tokens,
        speaker_positions: turn_offsets.clone(),
        turn_offsets,
    })
}

/// Inclusive token span over a flattened dialogue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn single(pos: usize) -> Self {
        Self::new(pos, pos)
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.start > self.end || self.end >= len {
            return Err(Error::SpanOutOfRange {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Serialize for Span {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(d)?;
        if start > end {
            return Err(serde::de::Error::custom(format!(
                "span start {start} after end {end}"
            )));
        }
        Ok(Span { start, end })
    }
}

/// Representative position of a mention. Tokens are whole words here, so the
/// first sub-word of a mention is simply its first word.
pub fn first_token_index(span: Span) -> usize {
    span.start
}

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn reserved_only() -> Self {
        Self::from_tokens(Vec::<String>::new()).expect("reserved vocabulary")
    }

    /// Rebuilds a vocabulary from its non-reserved tokens in id order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens.into_iter().map(Into::into));
        let mut id_of = HashMap::with_capacity(all.len());
        for (id, tok) in all.iter().enumerate() {
            if id_of.insert(tok.clone(), id).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary entry {tok:?}"
                )));
            }
        }
        Ok(Self { tokens: all, id_of })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens
            .get(id)
            .map(String::as_str)
            .unwrap_or(RESERVED[UNK])
    }

    /// Non-reserved tokens in id order.
    pub fn entries(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Maps ids back to strings, dropping PAD/BOS/EOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | BOS | EOS))
            .map(|&id| self.token(id).to_string())
            .collect()
    }

    /// Hex SHA-256 over the full id-ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for tok in &self.tokens {
            h.update(tok.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Frequency-ranked vocabulary: descending count, ties broken lexicographically.
pub fn build_vocabulary<'a, I>(corpus: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in corpus {
        for tok in seq {
            if RESERVED.contains(&tok.as_str()) {
                continue;
            }
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()))
}
