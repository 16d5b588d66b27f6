use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// The bundled ~10 KB demo text.
pub const DEMO_CORPUS: &str = include_str!("../../data/demo_corpus.txt");

/// Byte-level vocabulary built from a text.
///
/// When the text has more distinct bytes than the cap, the `cap - 1` most
/// frequent bytes keep their own ids and every other byte shares a final
/// unknown id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    symbols: Vec<u8>,
    has_unknown: bool,
}

impl CharVocab {
    pub const UNKNOWN_BYTE: u8 = b'?';

    pub fn from_text(text: &[u8], cap: usize) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if cap == 0 {
            return Err(Error::Config("vocabulary cap must be at least 1".into()));
        }
        let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
        for &b in text {
            *counts.entry(b).or_default() += 1;
        }
        if counts.len() <= cap {
            return Ok(Self {
                symbols: counts.into_keys().collect(),
                has_unknown: false,
            });
        }
        let mut by_freq: Vec<(u8, usize)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut symbols: Vec<u8> = by_freq.iter().take(cap - 1).map(|&(b, _)| b).collect();
        symbols.sort_unstable();
        Ok(Self {
            symbols,
            has_unknown: true,
        })
    }

    /// Rebuilds a vocabulary from stored parts (see checkpoints).
    pub fn from_parts(symbols: Vec<u8>, has_unknown: bool) -> Result<Self> {
        if symbols.is_empty() && !has_unknown {
            return Err(Error::Config("empty vocabulary".into()));
        }
        if symbols.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "vocabulary symbols must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            symbols,
            has_unknown,
        })
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn has_unknown(&self) -> bool {
        self.has_unknown
    }

    pub fn len(&self) -> usize {
        self.symbols.len() + usize::from(self.has_unknown)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn id_of(&self, byte: u8) -> Option<usize> {
        self.symbols
            .binary_search(&byte)
            .ok()
            .or(self.has_unknown.then_some(self.symbols.len()))
    }

    /// Maps bytes to ids; fails on a byte the vocabulary cannot represent.
    pub fn encode(&self, text: &[u8]) -> Result<Vec<usize>> {
        text.iter()
            .map(|&b| {
                self.id_of(b).ok_or_else(|| {
                    Error::Config(format!("byte {:?} is not in the vocabulary", b as char))
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        let bytes: Vec<u8> = ids
            .iter()
            .map(|&i| self.symbols.get(i).copied().unwrap_or(Self::UNKNOWN_BYTE))
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
