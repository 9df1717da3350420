//! Hashed character n-gram features.
//!
//! Every whitespace token `w` is padded to `<w>` and sliced into character
//! n-grams (by Unicode scalar value) for `minn <= n <= maxn`. Each n-gram's
//! UTF-8 bytes are hashed with 32-bit FNV-1a into one of `bucket` slots that
//! sit after the `V` dense word ids. Frequent words additionally emit their
//! own id.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceRecord;
use crate::par::Execution;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
}

const FNV32_OFFSET: u32 = 2_166_136_261;
const FNV32_PRIME: u32 = 16_777_619;
const FNV64_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV64_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 32-bit FNV-1a.
pub fn hash32(bytes: &[u8]) -> u32 {
    bytes.iter().fold(FNV32_OFFSET, |h, &b| {
        (h ^ u32::from(b)).wrapping_mul(FNV32_PRIME)
    })
}

/// 64-bit FNV-1a.
pub fn hash64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV64_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV64_PRIME)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub minn: u32,
    pub maxn: u32,
    pub word_ngrams: u32,
    pub bucket: u32,
    pub min_count: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            minn: 2,
            maxn: 5,
            word_ngrams: 1,
            bucket: 1_000_000,
            min_count: 1_000,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidConfig(m.to_string()));
        if self.minn < 1 || self.minn > self.maxn {
            return bad("need 1 <= minn <= maxn");
        }
        if self.bucket < 1 {
            return bad("bucket must be >= 1");
        }
        if self.min_count < 1 {
            return bad("min_count must be >= 1");
        }
        if self.word_ngrams != 1 {
            return bad("only word_ngrams = 1 is supported");
        }
        Ok(())
    }
}

/// Dense ids for frequent words, plus the hashed bucket range behind them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
    bucket: u32,
}

impl Vocab {
    pub fn from_words(words: Vec<String>, bucket: u32) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocab { words, index, bucket }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn bucket(&self) -> u32 {
        self.bucket
    }

    /// Total feature rows: `V + B`.
    pub fn n_features(&self) -> usize {
        self.words.len() + self.bucket as usize
    }
}

/// Words with count >= `min_count`, ordered by descending count then lexically.
pub fn build_vocab<'a, I>(texts: I, cfg: &FeatureConfig) -> Result<Vocab, FeatureError>
where
    I: IntoIterator<Item = &'a str>,
{
    cfg.validate()?;
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut any = false;
    for t in texts {
        any = true;
        for w in tokens(t) {
            *counts.entry(w).or_default() += 1;
        }
    }
    if !any {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= u64::from(cfg.min_count))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(Vocab::from_words(
        kept.into_iter().map(|(w, _)| w.to_string()).collect(),
        cfg.bucket,
    ))
}

pub fn build_vocab_from_records(
    records: &[SentenceRecord],
    cfg: &FeatureConfig,
) -> Result<Vocab, FeatureError> {
    build_vocab(records.iter().map(|r| r.text.as_str()), cfg)
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(' ').filter(|t| !t.is_empty())
}

/// Sparse bag of feature ids with multiplicities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureVector {
    /// `(id, count)` sorted by id, ids unique.
    pub entries: Vec<(u32, u32)>,
    pub total: u32,
}

impl FeatureVector {
    pub fn from_ids(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match entries.last_mut() {
                Some((last, c)) if *last == id => *c += 1,
                _ => entries.push((id, 1)),
            }
        }
        let total = entries.iter().map(|&(_, c)| c).sum();
        FeatureVector { entries, total }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Raw feature ids of one token, in emission order.
pub(crate) fn push_word_features(
    word: &str,
    vocab: &Vocab,
    cfg: &FeatureConfig,
    out: &mut Vec<u32>,
    scratch: &mut String,
) {
    let v = vocab.len() as u32;
    if let Some(id) = vocab.word_id(word) {
        out.push(id);
    }
    let padded: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let len = padded.len();
    for n in cfg.minn as usize..=cfg.maxn as usize {
        if n > len {
            break;
        }
        for start in 0..=len - n {
            scratch.clear();
            scratch.extend(&padded[start..start + n]);
            out.push(v + hash32(scratch.as_bytes()) % vocab.bucket);
        }
    }
}

/// Feature ids for the first `max_tokens` tokens (all tokens when `None`).
pub(crate) fn extract_ids(
    text: &str,
    vocab: &Vocab,
    cfg: &FeatureConfig,
    max_tokens: Option<usize>,
) -> Vec<u32> {
    let mut ids = Vec::new();
    let mut scratch = String::new();
    for w in tokens(text).take(max_tokens.unwrap_or(usize::MAX)) {
        push_word_features(w, vocab, cfg, &mut ids, &mut scratch);
    }
    ids
}

pub fn extract(text: &str, vocab: &Vocab, cfg: &FeatureConfig) -> FeatureVector {
    FeatureVector::from_ids(extract_ids(text, vocab, cfg, None))
}

pub fn extract_batch(
    texts: &[&str],
    vocab: &Vocab,
    cfg: &FeatureConfig,
    exec: Execution,
) -> Vec<FeatureVector> {
    exec.map(texts, |t| extract(t, vocab, cfg))
}

/// Character n-grams of a padded token, for inspection and tests.
pub fn char_ngrams(word: &str, minn: usize, maxn: usize) -> Vec<String> {
    let padded: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for n in minn..=maxn.min(padded.len()) {
        for start in 0..=padded.len() - n {
            out.push(padded[start..start + n].iter().collect());
        }
    }
    out
}
