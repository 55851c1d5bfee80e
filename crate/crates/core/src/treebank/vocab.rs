use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const UNK: usize = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Token index with index 0 reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl From<Vec<String>> for Vocab {
    /// Expects the unknown marker at position 0, as produced by `Into<Vec<String>>`.
    fn from(mut tokens: Vec<String>) -> Self {
        if tokens.first().map(String::as_str) == Some(UNK_TOKEN) {
            tokens.remove(0);
        }
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Indexes `tokens` from 1 in the given order; duplicates keep their
    /// first index.
    pub fn from_tokens<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut v = Vocab {
            tokens: vec![UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Number of indices including the unknown slot.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }
}

/// Indexes every token seen at least `min_count` times, in order of first
/// appearance. A `min_count` of 0 behaves like 1.
pub fn build_vocab<I, S, T>(corpus: I, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for sentence in corpus {
        for tok in sentence {
            let tok = tok.as_ref();
            match counts.get_mut(tok) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(tok.to_string(), 1);
                    order.push(tok.to_string());
                }
            }
        }
    }
    let min_count = min_count.max(1);
    Vocab::from_tokens(order.into_iter().filter(|t| counts[t] >= min_count))
}
