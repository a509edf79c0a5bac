use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, CLS, PAD, SEP};
use super::EncoderError;

pub const DEFAULT_MAX_LEN: usize = 64;

/// Query-side input layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// `[CLS] H [SEP] R [SEP]`
    Baseline,
    /// `[CLS] H [SEP] R [SEP] P [SEP]`
    Full,
    /// `[CLS] P [SEP]`
    PredOnly,
}

impl SequenceMode {
    pub const ALL: [SequenceMode; 3] = [Self::Baseline, Self::Full, Self::PredOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Full => "full",
            Self::PredOnly => "pred_only",
        }
    }

    pub fn needs_descriptions(self) -> bool {
        self != Self::Baseline
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for SequenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "full" => Ok(Self::Full),
            "pred_only" | "pred-only" => Ok(Self::PredOnly),
            other => Err(format!(
                "unknown mode {other:?} (expected baseline, full or pred_only)"
            )),
        }
    }
}

/// Token ids, segment ids and validity mask, all of length `max_len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub mask: Vec<u8>,
}

impl TokenSequence {
    /// Number of unpadded positions.
    pub fn valid_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m == 1).count()
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Same content with `extra` more padding positions.
    pub fn padded(&self, extra: usize) -> Self {
        let mut s = self.clone();
        s.token_ids.extend(std::iter::repeat_n(PAD, extra));
        s.segment_ids.extend(std::iter::repeat_n(0, extra));
        s.mask.extend(std::iter::repeat_n(0, extra));
        s
    }

    /// Checks the layout invariants: leading CLS, SEPs and padding inside
    /// the right regions, segments constant between separators.
    pub fn check(&self) -> Result<(), String> {
        let n = self.token_ids.len();
        if self.segment_ids.len() != n || self.mask.len() != n {
            return Err("component lengths differ".into());
        }
        if n == 0 || self.token_ids[0] != CLS || self.mask[0] != 1 {
            return Err("position 0 must be an unmasked CLS".into());
        }
        let valid = self.valid_len();
        if self.mask[valid..].iter().any(|&m| m != 0) {
            return Err("mask is not a prefix of ones".into());
        }
        if self.token_ids[valid - 1] != SEP {
            return Err("last valid token must be SEP".into());
        }
        if self.token_ids[valid..].contains(&SEP) {
            return Err("SEP in padding".into());
        }
        let mut block_segment = self.segment_ids[0];
        let mut after_sep = false;
        for i in 0..valid {
            if after_sep {
                block_segment = self.segment_ids[i];
            } else if self.segment_ids[i] != block_segment {
                return Err(format!("segment changes inside a block at {i}"));
            }
            if self.segment_ids[i] > 2 {
                return Err(format!("segment id {} out of range", self.segment_ids[i]));
            }
            after_sep = self.token_ids[i] == SEP;
        }
        Ok(())
    }
}

/// Trims content blocks until they fit in `budget` tokens, one token at a
/// time from the end of the currently longest block. Blocks earlier in
/// `blocks` win ties, so callers pass them in priority order.
fn truncate(blocks: &mut [&mut Vec<u32>], budget: usize) {
    let mut total: usize = blocks.iter().map(|b| b.len()).sum();
    while total > budget {
        let longest = blocks.iter().map(|b| b.len()).max().unwrap_or(0);
        let victim = blocks
            .iter_mut()
            .find(|b| b.len() == longest)
            .expect("a block of maximal length exists");
        victim.pop();
        total -= 1;
    }
}

fn assemble(blocks: &[(&[u32], u8)], max_len: usize) -> TokenSequence {
    let mut token_ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    token_ids.push(CLS);
    segment_ids.push(0);
    for (content, segment) in blocks {
        token_ids.extend_from_slice(content);
        token_ids.push(SEP);
        segment_ids.extend(std::iter::repeat_n(*segment, content.len() + 1));
    }
    let valid = token_ids.len();
    debug_assert!(valid <= max_len);
    let mut mask = vec![1u8; valid];
    token_ids.resize(max_len, PAD);
    segment_ids.resize(max_len, 0);
    mask.resize(max_len, 0);
    TokenSequence {
        token_ids,
        segment_ids,
        mask,
    }
}

/// Query sequence from already-tokenized blocks.
pub fn query_sequence_from_ids(
    head: &[u32],
    relation: &[u32],
    prediction: Option<&[u32]>,
    mode: SequenceMode,
    max_len: usize,
) -> Result<TokenSequence, EncoderError> {
    let specials = match mode {
        SequenceMode::Baseline => 3,
        SequenceMode::Full => 4,
        SequenceMode::PredOnly => 2,
    };
    if max_len < specials {
        return Err(EncoderError::MaxLenTooSmall {
            max_len,
            needed: specials,
        });
    }
    let budget = max_len - specials;
    let mut h = head.to_vec();
    let mut r = relation.to_vec();
    let mut p = match (mode, prediction) {
        (SequenceMode::Baseline, _) => Vec::new(),
        (_, Some(p)) if !p.is_empty() => p.to_vec(),
        _ => return Err(EncoderError::MissingPrediction(mode)),
    };
    Ok(match mode {
        SequenceMode::Baseline => {
            truncate(&mut [&mut h, &mut r], budget);
            assemble(&[(&h, 0), (&r, 1)], max_len)
        }
        SequenceMode::Full => {
            truncate(&mut [&mut h, &mut p, &mut r], budget);
            assemble(&[(&h, 0), (&r, 1), (&p, 2)], max_len)
        }
        SequenceMode::PredOnly => {
            truncate(&mut [&mut p], budget);
            assemble(&[(&p, 0)], max_len)
        }
    })
}

pub fn build_query_sequence(
    head_text: &str,
    relation_text: &str,
    prediction_text: Option<&str>,
    mode: SequenceMode,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenSequence, EncoderError> {
    let prediction = match prediction_text {
        Some(t) if mode.needs_descriptions() => Some(vocab.tokenize(t)),
        _ => None,
    };
    query_sequence_from_ids(
        &vocab.tokenize(head_text),
        &vocab.tokenize(relation_text),
        prediction.as_deref(),
        mode,
        max_len,
    )
}

pub fn entity_sequence_from_ids(text: &[u32], max_len: usize) -> Result<TokenSequence, EncoderError> {
    if max_len < 2 {
        return Err(EncoderError::MaxLenTooSmall { max_len, needed: 2 });
    }
    let mut t = text.to_vec();
    truncate(&mut [&mut t], max_len - 2);
    Ok(assemble(&[(&t, 0)], max_len))
}

pub fn build_entity_sequence(
    text: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<TokenSequence, EncoderError> {
    entity_sequence_from_ids(&vocab.tokenize(text), max_len)
}
