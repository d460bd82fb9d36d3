//! Serialization of caption/question pairs and a small word-level tokenizer.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Prefix placed before the caption in generative prompts.
pub const CAPTION_PREFIX: &str = "caption:";
/// Prefix placed before the question in generative prompts.
pub const QUESTION_PREFIX: &str = "question:";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputStyle {
    /// Encoder pair input: `[CLS] caption [SEP] question [SEP]`.
    #[default]
    PairEncoding,
    /// Text-to-text prompt: `caption: {caption} question: {question}`.
    PrefixedGenerative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Special,
    Caption,
    Question,
}

/// A typed span, in bytes for [`SerializedInput`] and in tokens for
/// [`TokenizedInput`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedInput {
    pub text: String,
    /// Byte spans of the caption and question content within `text`.
    pub segments: Vec<Segment>,
}

impl SerializedInput {
    pub fn segment_text(&self, kind: SegmentKind) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.kind == kind)
            .map(|s| &self.text[s.range.clone()])
    }
}

fn push_segment(text: &mut String, segments: &mut Vec<Segment>, kind: SegmentKind, body: &str) {
    let start = text.len();
    text.push_str(body);
    segments.push(Segment {
        kind,
        range: start..text.len(),
    });
}

/// Builds the model input for a question and an optional caption. With no
/// caption (the question-only ablation) the caption segment and its prefix
/// are left out entirely.
pub fn format_pair_input(caption: Option<&str>, question: &str, style: InputStyle) -> SerializedInput {
    let mut text = String::new();
    let mut segments = Vec::new();
    match style {
        InputStyle::PairEncoding => {
            text.push_str(CLS_TOKEN);
            text.push(' ');
            if let Some(c) = caption {
                push_segment(&mut text, &mut segments, SegmentKind::Caption, c);
                text.push(' ');
                text.push_str(SEP_TOKEN);
                text.push(' ');
            }
            push_segment(&mut text, &mut segments, SegmentKind::Question, question);
            text.push(' ');
            text.push_str(SEP_TOKEN);
        }
        InputStyle::PrefixedGenerative => {
            if let Some(c) = caption {
                text.push_str(CAPTION_PREFIX);
                text.push(' ');
                push_segment(&mut text, &mut segments, SegmentKind::Caption, c);
                text.push(' ');
            }
            text.push_str(QUESTION_PREFIX);
            text.push(' ');
            push_segment(&mut text, &mut segments, SegmentKind::Question, question);
        }
    }
    SerializedInput { text, segments }
}

/// Token ids plus the segment layout. Segments are non-overlapping and
/// cover `0..n_t()` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub tokens: Vec<u32>,
    pub segments: Vec<Segment>,
}

impl TokenizedInput {
    pub fn n_t(&self) -> usize {
        self.tokens.len()
    }
}

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
const FIRST_WORD_ID: u32 = 4;

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Closed word vocabulary built from training text; unseen words map to
/// [`UNK_ID`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WordTokenizer {
    words: BTreeMap<String, u32>,
}

impl WordTokenizer {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut all: Vec<String> = texts.into_iter().flat_map(words).collect();
        all.sort();
        all.dedup();
        let words = all
            .into_iter()
            .zip(FIRST_WORD_ID..)
            .collect();
        Self { words }
    }

    pub fn vocab_size(&self) -> usize {
        FIRST_WORD_ID as usize + self.words.len()
    }

    pub fn token_id(&self, word: &str) -> u32 {
        self.words.get(word).copied().unwrap_or(UNK_ID)
    }

    /// `[CLS] caption [SEP] question [SEP]`, or `[CLS] question [SEP]` without a caption.
    pub fn encode_pair(&self, caption: Option<&str>, question: &str) -> TokenizedInput {
        let mut tokens = Vec::new();
        let mut segments = Vec::new();
        let mut push = |kind: SegmentKind, ids: Vec<u32>, tokens: &mut Vec<u32>| {
            if ids.is_empty() {
                return;
            }
            let start = tokens.len();
            tokens.extend(ids);
            segments.push(Segment {
                kind,
                range: start..tokens.len(),
            });
        };
        push(SegmentKind::Special, vec![CLS_ID], &mut tokens);
        if let Some(c) = caption {
            push(SegmentKind::Caption, words(c).map(|w| self.token_id(&w)).collect(), &mut tokens);
            push(SegmentKind::Special, vec![SEP_ID], &mut tokens);
        }
        push(SegmentKind::Question, words(question).map(|w| self.token_id(&w)).collect(), &mut tokens);
        push(SegmentKind::Special, vec![SEP_ID], &mut tokens);
        TokenizedInput { tokens, segments }
    }
}
