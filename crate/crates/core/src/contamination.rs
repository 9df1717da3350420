//! Word 4-gram containment between evaluation and training text.
//!
//! A test sentence counts as contaminated when a single training sentence
//! holds every one of its word 4-grams. Sentences shorter than four tokens
//! instead need their whole token sequence to appear contiguously in some
//! training sentence.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceRecord;
use crate::features::tokens;
use crate::langmeta::LangCode;
use crate::par::Execution;

const PAD: u32 = u32::MAX;

#[derive(Debug, Default, Clone)]
pub struct ContainmentIndex {
    vocab: HashMap<String, u32>,
    grams: HashMap<[u32; 4], Vec<u32>>,
    /// Every contiguous 1-, 2- and 3-gram, right-padded with `PAD`.
    short: HashSet<[u32; 3]>,
    lengths: Vec<u32>,
}

impl ContainmentIndex {
    pub fn build(train: &[SentenceRecord]) -> Self {
        Self::build_with(train, Execution::default())
    }

    pub fn build_with(train: &[SentenceRecord], exec: Execution) -> Self {
        Self::from_texts(&train.iter().map(|r| r.text.as_str()).collect::<Vec<_>>(), exec)
    }

    pub fn from_texts(texts: &[&str], exec: Execution) -> Self {
        let split: Vec<Vec<&str>> = exec.map(texts, |t| tokens(t).collect());
        let mut idx = ContainmentIndex::default();
        for (sid, toks) in split.iter().enumerate() {
            let ids: Vec<u32> = toks
                .iter()
                .map(|t| {
                    let next = idx.vocab.len() as u32;
                    *idx.vocab.entry((*t).to_owned()).or_insert(next)
                })
                .collect();
            idx.lengths.push(ids.len() as u32);
            for w in ids.windows(4) {
                let list = idx.grams.entry([w[0], w[1], w[2], w[3]]).or_default();
                // Sentence ids arrive in increasing order, so lists stay sorted.
                if list.last() != Some(&(sid as u32)) {
                    list.push(sid as u32);
                }
            }
            for n in 1..=3 {
                for w in ids.windows(n) {
                    let mut key = [PAD; 3];
                    key[..n].copy_from_slice(w);
                    idx.short.insert(key);
                }
            }
        }
        idx
    }

    pub fn sentences(&self) -> usize {
        self.lengths.len()
    }

    pub fn sentence_len(&self, id: usize) -> Option<usize> {
        self.lengths.get(id).map(|&n| n as usize)
    }

    /// Training sentence ids containing `gram`, ascending.
    pub fn postings(&self, gram: [&str; 4]) -> &[u32] {
        let mut key = [0u32; 4];
        for (k, t) in key.iter_mut().zip(gram) {
            match self.vocab.get(t) {
                Some(&id) => *k = id,
                None => return &[],
            }
        }
        self.grams.get(&key).map_or(&[], Vec::as_slice)
    }

    pub fn is_contaminated(&self, text: &str) -> bool {
        let mut ids = Vec::new();
        for t in tokens(text) {
            match self.vocab.get(t) {
                Some(&id) => ids.push(id),
                None => return false,
            }
        }
        match ids.len() {
            0 => false,
            n @ 1..=3 => {
                let mut key = [PAD; 3];
                key[..n].copy_from_slice(&ids);
                self.short.contains(&key)
            }
            _ => {
                let mut lists = Vec::with_capacity(ids.len() - 3);
                for w in ids.windows(4) {
                    match self.grams.get(&[w[0], w[1], w[2], w[3]]) {
                        Some(l) => lists.push(l.as_slice()),
                        None => return false,
                    }
                }
                lists.sort_by_key(|l| l.len());
                let (first, rest) = lists.split_first().expect("at least one 4-gram");
                first
                    .iter()
                    .any(|sid| rest.iter().all(|l| l.binary_search(sid).is_ok()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRate {
    pub sentences: usize,
    pub contaminated: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub dataset: String,
    pub sentences: usize,
    pub contaminated: usize,
    /// Percent, rounded to 2 decimals.
    pub rate: f64,
    pub languages: usize,
    /// Languages with a rate strictly between 0 and 10 percent.
    pub bucket_0_10: usize,
    /// Languages with a rate of at least 10 percent.
    pub bucket_ge_10: usize,
    pub per_language: BTreeMap<LangCode, LanguageRate>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub(crate) fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn report(
    dataset: &str,
    test: &[SentenceRecord],
    index: &ContainmentIndex,
    exec: Execution,
) -> ContaminationReport {
    let flags = exec.map(test, |r| index.is_contaminated(&r.text));
    let mut per: BTreeMap<LangCode, (usize, usize)> = BTreeMap::new();
    for (r, &hit) in test.iter().zip(&flags) {
        let e = per.entry(r.lang).or_default();
        e.0 += 1;
        e.1 += usize::from(hit);
    }
    let per_language: BTreeMap<_, _> = per
        .into_iter()
        .map(|(l, (n, c))| {
            (l, LanguageRate { sentences: n, contaminated: c, rate: round2(pct(c, n)) })
        })
        .collect();
    let unrounded = |lr: &LanguageRate| pct(lr.contaminated, lr.sentences);
    let contaminated = flags.iter().filter(|&&f| f).count();
    ContaminationReport {
        dataset: dataset.to_owned(),
        sentences: test.len(),
        contaminated,
        rate: round2(pct(contaminated, test.len())),
        languages: per_language.len(),
        bucket_0_10: per_language
            .values()
            .filter(|lr| lr.contaminated > 0 && unrounded(lr) < 10.0)
            .count(),
        bucket_ge_10: per_language.values().filter(|lr| unrounded(lr) >= 10.0).count(),
        per_language,
    }
}

/// One report per named test set, in name order.
pub fn audit(
    test_sets: &BTreeMap<String, Vec<SentenceRecord>>,
    train: &[SentenceRecord],
) -> Vec<ContaminationReport> {
    audit_with(test_sets, train, Execution::default())
}

pub fn audit_with(
    test_sets: &BTreeMap<String, Vec<SentenceRecord>>,
    train: &[SentenceRecord],
    exec: Execution,
) -> Vec<ContaminationReport> {
    let index = ContainmentIndex::build_with(train, exec);
    test_sets
        .iter()
        .map(|(name, recs)| report(name, recs, &index, exec))
        .collect()
}

pub fn write_csv<W: Write>(mut w: W, reports: &[ContaminationReport]) -> std::io::Result<()> {
    writeln!(w, "dataset,sentences,contam_pct,languages,bucket_0_10,bucket_ge_10")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{:.2},{},{},{}",
            r.dataset, r.sentences, r.rate, r.languages, r.bucket_0_10, r.bucket_ge_10
        )?;
    }
    Ok(())
}

pub fn write_json<W: Write>(w: W, reports: &[ContaminationReport]) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(w, reports)
}
