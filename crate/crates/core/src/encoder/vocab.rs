use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::EncoderError;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Lowercases, splits on whitespace and makes every punctuation character a
/// token of its own.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_ascii()) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else {
            word.push(c);
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Dense token ↔ id map; ids 0..4 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Specials followed by `tokens` in the given order. Duplicates and
    /// specials in `tokens` are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            vocab.push(s.to_string());
        }
        for t in tokens {
            let t = t.into();
            if !vocab.index.contains_key(&t) {
                vocab.push(t);
            }
        }
        vocab
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    /// Keeps words seen at least `min_freq` times, most frequent first, ties
    /// alphabetical.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in split_words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        split_words(text)
            .iter()
            .map(|w| self.id(w).unwrap_or(UNK))
            .collect()
    }

    /// `token<TAB>id` per line, in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(out, "{t}\t{i}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, EncoderError> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |reason: &str| EncoderError::Vocabulary(format!("line {}: {reason}", n + 1));
            let (token, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| bad("expected token<TAB>id"))?;
            let id: usize = id.parse().map_err(|_| bad("id is not an integer"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and in order"));
            }
            tokens.push(token.to_string());
        }
        if tokens.len() < SPECIALS.len() || tokens[..4] != SPECIALS {
            return Err(EncoderError::Vocabulary(
                "first four entries must be the special tokens".into(),
            ));
        }
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in tokens {
            if vocab.index.contains_key(&t) {
                return Err(EncoderError::Vocabulary(format!("duplicate token {t:?}")));
            }
            vocab.push(t);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        std::fs::write(path, self.to_tsv()).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_tsv(&text)
    }
}

/// Free-function form of [`Vocabulary::tokenize`].
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    vocab.tokenize(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_ids(pairs: &[(&str, usize)]) -> Vocabulary {
        let n = pairs.iter().map(|p| p.1).max().unwrap() + 1;
        let mut tokens: Vec<String> = (4..n).map(|i| format!("filler{i}")).collect();
        for (t, id) in pairs {
            tokens[id - 4] = t.to_string();
        }
        Vocabulary::from_tokens(tokens)
    }

    #[test]
    fn lookup_fallback_and_empty() {
        let v = with_ids(&[("land", 5), ("reform", 9)]);
        assert_eq!(v.tokenize("Land reform"), vec![5, 9]);
        assert_eq!(v.tokenize("zzzyx"), vec![UNK]);
        assert!(v.tokenize("").is_empty());
    }

    #[test]
    fn punctuation_is_split_off() {
        assert_eq!(
            split_words("Land (especially by government action)."),
            ["land", "(", "especially", "by", "government", "action", ")", "."]
        );
        assert_eq!(split_words("person's  gender"), ["person", "'", "s", "gender"]);
    }

    #[test]
    fn build_respects_min_freq_and_is_ordered() {
        let v = Vocabulary::build(["b a a", "c b a"], 2);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id("b"), Some(5));
        assert_eq!(v.id("c"), None);
    }

    #[test]
    fn tsv_round_trip() {
        let v = Vocabulary::build(["x y x y z"], 1);
        assert_eq!(Vocabulary::from_tsv(&v.to_tsv()).unwrap(), v);
        assert!(Vocabulary::from_tsv("[PAD]\t0\n").is_err());
    }
}
