use std::collections::HashMap;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use super::{CorpusError, Dataset, Result, Split};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map with `PAD = 0` and `UNK = 1` always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from the tokens of both questions of every pair.
    ///
    /// Tokens seen at least `min_count` times get indices from 2 upwards,
    /// ordered by descending frequency, then lexicographically.
    pub fn build(dataset: &Dataset, min_count: usize) -> Result<Self> {
        Self::build_from(std::iter::once(dataset), min_count)
    }

    /// Same as [`Vocabulary::build`] over several training-side datasets.
    pub fn build_from<'a>(
        datasets: impl IntoIterator<Item = &'a Dataset>,
        min_count: usize,
    ) -> Result<Self> {
        let min_count = min_count.max(1);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for ds in datasets {
            if matches!(ds.split, Split::Dev | Split::Test) {
                return Err(CorpusError::LeakySplit(ds.split));
            }
            for p in &ds.pairs {
                for t in p.q1.tokens.iter().chain(&p.q2.tokens) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(Self::from_tokens(kept.into_iter().map(|(t, _)| t)))
    }

    /// Vocabulary with the given tokens at indices 2.. in order.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Self {
            token_to_index: HashMap::new(),
            index_to_token: Vec::new(),
        };
        for t in [PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()]
            .into_iter()
            .chain(tokens.into_iter().map(Into::into))
        {
            if !vocab.token_to_index.contains_key(&t) {
                vocab.token_to_index.insert(t.clone(), vocab.index_to_token.len());
                vocab.index_to_token.push(t);
            }
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    /// Index of `token`, falling back to `UNK`.
    pub fn index(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    /// Stable content hash, used to tie checkpoints to their vocabulary.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in &self.index_to_token {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.finalize().into()
    }

    /// One token per line, in index order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.index_to_token {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.push(line?);
        }
        let mut it = tokens.into_iter();
        let (Some(pad), Some(unk)) = (it.next(), it.next()) else {
            return Err(CorpusError::Format(
                "vocabulary file must start with <pad> and <unk>".into(),
            ));
        };
        if pad != PAD_TOKEN || unk != UNK_TOKEN {
            return Err(CorpusError::Format(
                "vocabulary file must start with <pad> and <unk>".into(),
            ));
        }
        Ok(Self::from_tokens(it))
    }
}
