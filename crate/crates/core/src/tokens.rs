//! Prompt token sequences and the target-to-source token mapping used by
//! I2T-CA adaptation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    token_ids: Vec<u32>,
    embeddings: Tensor,
    word_spans: BTreeMap<String, Vec<Range<usize>>>,
}

impl TokenSequence {
    pub fn new(
        token_ids: Vec<u32>,
        embeddings: Tensor,
        word_spans: BTreeMap<String, Vec<Range<usize>>>,
    ) -> Result<Self> {
        let len = token_ids.len();
        if len == 0 {
            return Err(Error::Dimension("token sequence must not be empty".into()));
        }
        let (rows, _) = embeddings.expect_matrix("token embeddings")?;
        if rows != len {
            return Err(Error::Dimension(format!(
                "{len} tokens but {rows} embedding rows"
            )));
        }
        for (word, spans) in &word_spans {
            if spans.iter().any(|r| r.is_empty() || r.end > len) {
                return Err(Error::Dimension(format!(
                    "span of `{word}` out of range for {len} tokens"
                )));
            }
        }
        Ok(Self {
            token_ids,
            embeddings,
            word_spans,
        })
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    pub fn word_spans(&self) -> &BTreeMap<String, Vec<Range<usize>>> {
        &self.word_spans
    }

    /// All token indices belonging to any occurrence of `word`, ascending.
    pub fn word_tokens(&self, word: &str) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .word_spans
            .get(word)
            .into_iter()
            .flatten()
            .flat_map(|r| r.clone())
            .collect();
        out.sort_unstable();
        out
    }
}

/// The partial map `f` from target token index to source token index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMapping {
    target_to_source: Vec<Option<usize>>,
    source_len: usize,
}

impl TokenMapping {
    pub fn new(target_to_source: Vec<Option<usize>>, source_len: usize) -> Result<Self> {
        if let Some(bad) = target_to_source.iter().flatten().find(|&&s| s >= source_len) {
            return Err(Error::Mapping(format!(
                "source index {bad} out of range for {source_len} source tokens"
            )));
        }
        Ok(Self {
            target_to_source,
            source_len,
        })
    }

    /// Every target token unmapped.
    pub fn unmapped(target_len: usize) -> Self {
        Self {
            target_to_source: vec![None; target_len],
            source_len: 0,
        }
    }

    pub fn identity(len: usize) -> Self {
        Self {
            target_to_source: (0..len).map(Some).collect(),
            source_len: len,
        }
    }

    pub fn target_len(&self) -> usize {
        self.target_to_source.len()
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn get(&self, target: usize) -> Option<usize> {
        self.target_to_source[target]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.target_to_source
    }

    pub fn mapped_count(&self) -> usize {
        self.target_to_source.iter().flatten().count()
    }
}

/// Aligns target tokens to source tokens by the longest common subsequence
/// of token ids. Unaligned target tokens map to `None`; without a source
/// prompt everything is unmapped.
pub fn build_token_mapping(source: Option<&TokenSequence>, target: &TokenSequence) -> TokenMapping {
    let Some(source) = source else {
        return TokenMapping::unmapped(target.len());
    };
    let (s, t) = (source.token_ids(), target.token_ids());
    let (ns, nt) = (s.len(), t.len());
    // lcs[i][j] = LCS length of s[i..] and t[j..]
    let w = nt + 1;
    let mut lcs = vec![0u32; (ns + 1) * w];
    for i in (0..ns).rev() {
        for j in (0..nt).rev() {
            lcs[i * w + j] = if s[i] == t[j] {
                lcs[(i + 1) * w + j + 1] + 1
            } else {
                lcs[(i + 1) * w + j].max(lcs[i * w + j + 1])
            };
        }
    }
    let mut map = vec![None; nt];
    let (mut i, mut j) = (0, 0);
    while i < ns && j < nt {
        if s[i] == t[j] {
            map[j] = Some(i);
            i += 1;
            j += 1;
        } else if lcs[(i + 1) * w + j] >= lcs[i * w + j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    TokenMapping {
        target_to_source: map,
        source_len: ns,
    }
}
