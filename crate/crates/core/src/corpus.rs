//! Corpus ingestion, normalization, deduplication, domain attribution and
//! capped, tier-aware train/dev/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::langmeta::{LangCode, Registry, ScriptCode};
use crate::par::Execution;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is not valid UTF-8 (byte offset {0})")]
    InvalidEncoding(usize),
    #[error("language {0} is not registered")]
    UnknownLanguage(LangCode),
    #[error("line {line}: {msg}")]
    BadRecord { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    Speech,
    Government,
    Benchmarks,
    Stories,
    News,
    Health,
    Wikipedia,
    Religious,
    Web,
    Unknown,
}

impl Domain {
    pub const ALL: [Domain; 10] = [
        Domain::Speech,
        Domain::Government,
        Domain::Benchmarks,
        Domain::Stories,
        Domain::News,
        Domain::Health,
        Domain::Wikipedia,
        Domain::Religious,
        Domain::Web,
        Domain::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Speech => "Speech",
            Domain::Government => "Government",
            Domain::Benchmarks => "Benchmarks",
            Domain::Stories => "Stories",
            Domain::News => "News",
            Domain::Health => "Health",
            Domain::Wikipedia => "Wikipedia",
            Domain::Religious => "Religious",
            Domain::Web => "Web",
            Domain::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Metadata keywords per domain, in matching priority order.
const DOMAIN_KEYWORDS: [(Domain, &[&str]); 9] = [
    (Domain::Speech, &["Speech", "CommonVoice", "TTS", "Audio"]),
    (
        Domain::Government,
        &["Human Rights", "Autshumato", "Legal", "GOV", "Parliament", "Gazette"],
    ),
    (
        Domain::Benchmarks,
        &[
            "Flores", "NLB", "mt560", "Tatoeba", "UD", "ai4d", "lti", "Benchmark", "Human",
            "Madar", "iadd",
        ],
    ),
    (Domain::Stories, &["Story", "Stories", "Fiction", "Bloom", "Lyrics"]),
    (
        Domain::News,
        &["News", "xlsum", "Vukuzenzele", "CBC", "BBC", "Afriqa", "Masakha", "Goud"],
    ),
    (Domain::Health, &["Health", "Covid", "Medical", "Med"]),
    (Domain::Wikipedia, &["Wiki", "Leipzig", "Wili", "Encyclopedia"]),
    (
        Domain::Religious,
        &["Bible", "JW", "Tanzil", "PBC", "Quran", "Scripture", "Religion"],
    ),
    (
        Domain::Web,
        &["Oscar", "CC", "CommonCrawl", "Web", "Dialect", "Social", "Forum"],
    ),
];

/// Maps a metadata identifier to a domain by case-insensitive keyword search.
///
/// Categories are tried in fixed order; inside a category longer keywords
/// are tried first. No hit yields [`Domain::Unknown`].
pub fn attribute_domain(meta_id: &str) -> Domain {
    let hay = meta_id.to_lowercase();
    for (domain, keywords) in DOMAIN_KEYWORDS {
        let mut kws: Vec<&str> = keywords.to_vec();
        kws.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        if kws.iter().any(|k| hay.contains(&k.to_lowercase())) {
            return domain;
        }
    }
    Domain::Unknown
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text: String,
    pub lang: LangCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<ScriptCode>,
    pub domain: Domain,
    #[serde(rename = "source")]
    pub source_dataset: String,
    pub meta_id: String,
    pub tier: Tier,
}

#[derive(Deserialize)]
struct RecordLine {
    text: String,
    lang: LangCode,
    #[serde(default)]
    script: Option<ScriptCode>,
    #[serde(default)]
    domain: Option<Domain>,
    #[serde(default)]
    source: String,
    #[serde(default)]
    meta_id: String,
    #[serde(default = "default_tier")]
    tier: Tier,
}

fn default_tier() -> Tier {
    Tier::Primary
}

impl SentenceRecord {
    pub fn new(text: impl Into<String>, lang: LangCode, tier: Tier) -> Self {
        SentenceRecord {
            text: text.into(),
            lang,
            script: None,
            domain: Domain::Unknown,
            source_dataset: String::new(),
            meta_id: String::new(),
            tier,
        }
    }

    /// Parses one JSON line; a missing `domain` is recomputed from `meta_id`.
    pub fn from_json(line: &str) -> Result<Self, serde_json::Error> {
        let raw: RecordLine = serde_json::from_str(line)?;
        let domain = raw.domain.unwrap_or_else(|| attribute_domain(&raw.meta_id));
        Ok(SentenceRecord {
            text: raw.text,
            lang: raw.lang,
            script: raw.script,
            domain,
            source_dataset: raw.source,
            meta_id: raw.meta_id,
            tier: raw.tier,
        })
    }

    fn canonical_key(&self) -> (Tier, &str, &str, &str, Option<ScriptCode>, Domain) {
        (
            self.tier,
            &self.text,
            &self.source_dataset,
            &self.meta_id,
            self.script,
            self.domain,
        )
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<SentenceRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = SentenceRecord::from_json(&line).map_err(|e| CorpusError::BadRecord {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[SentenceRecord]) -> Result<(), CorpusError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// NFC, control characters dropped, whitespace runs collapsed, trimmed.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.nfc() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_control() {
            continue;
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

pub fn normalize_bytes(bytes: &[u8]) -> Result<String, CorpusError> {
    std::str::from_utf8(bytes)
        .map(normalize)
        .map_err(|e| CorpusError::InvalidEncoding(e.valid_up_to()))
}

/// Normalizes every record's text and drops records left empty.
pub fn normalize_records(records: Vec<SentenceRecord>, exec: Execution) -> Vec<SentenceRecord> {
    let texts = exec.map(&records, |r| normalize(&r.text));
    records
        .into_iter()
        .zip(texts)
        .filter(|(_, t)| !t.is_empty())
        .map(|(mut r, t)| {
            r.text = t;
            r
        })
        .collect()
}

/// Keeps one record per distinct text.
///
/// Primary-tier records are considered before secondary-tier ones, each
/// tier in input order; the first record seen for a text wins.
pub fn dedup(records: Vec<SentenceRecord>) -> Vec<SentenceRecord> {
    let mut ordered = records;
    ordered.sort_by_key(|r| r.tier); // stable
    let mut seen: HashSet<String> = HashSet::with_capacity(ordered.len());
    ordered
        .into_iter()
        .filter(|r| seen.insert(r.text.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_cap: usize,
    pub dev_cap: usize,
    pub test_cap: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_cap: 100_000,
            dev_cap: 100,
            test_cap: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<SentenceRecord>,
    pub dev: Vec<SentenceRecord>,
    pub test: Vec<SentenceRecord>,
}

pub type Provenance = BTreeMap<LangCode, BTreeSet<String>>;

impl Splits {
    /// Source datasets that contributed training data, per language.
    pub fn provenance(&self) -> Provenance {
        let mut map = Provenance::new();
        for r in &self.train {
            map.entry(r.lang)
                .or_default()
                .insert(r.source_dataset.clone());
        }
        map
    }
}

fn language_seed(seed: u64, lang: LangCode) -> u64 {
    let tag = crate::features::hash64(lang.as_str().as_bytes());
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag
}

/// Per-language capped split.
///
/// Each language's records are put in canonical order, primary and secondary
/// pools are shuffled with a language-specific seed, and the primary pool is
/// laid before the secondary one. Test is drawn first, then dev, then train,
/// each up to its cap. Records past the caps are discarded.
pub fn build_splits(
    records: &[SentenceRecord],
    spec: &SplitSpec,
    registry: Option<&Registry>,
) -> Result<Splits, CorpusError> {
    build_splits_with(records, spec, registry, Execution::default())
}

pub fn build_splits_with(
    records: &[SentenceRecord],
    spec: &SplitSpec,
    registry: Option<&Registry>,
    exec: Execution,
) -> Result<Splits, CorpusError> {
    let mut by_lang: BTreeMap<LangCode, Vec<&SentenceRecord>> = BTreeMap::new();
    for r in records {
        by_lang.entry(r.lang).or_default().push(r);
    }
    if let Some(reg) = registry {
        if let Some(&lang) = by_lang.keys().find(|l| !reg.contains(**l)) {
            return Err(CorpusError::UnknownLanguage(lang));
        }
    }
    let groups: Vec<(LangCode, Vec<&SentenceRecord>)> = by_lang.into_iter().collect();
    let per_lang = exec.map(&groups, |(lang, recs)| split_language(*lang, recs, spec));

    let mut splits = Splits::default();
    for (test, dev, train) in per_lang {
        splits.test.extend(test);
        splits.dev.extend(dev);
        splits.train.extend(train);
    }
    Ok(splits)
}

type LangSplit = (Vec<SentenceRecord>, Vec<SentenceRecord>, Vec<SentenceRecord>);

fn split_language(lang: LangCode, recs: &[&SentenceRecord], spec: &SplitSpec) -> LangSplit {
    let mut sorted: Vec<&SentenceRecord> = recs.to_vec();
    sorted.sort_by(|a, b| a.canonical_key().cmp(&b.canonical_key()));
    let (mut primary, mut secondary): (Vec<_>, Vec<_>) =
        sorted.into_iter().partition(|r| r.tier == Tier::Primary);

    let mut rng = ChaCha8Rng::seed_from_u64(language_seed(spec.seed, lang));
    primary.shuffle(&mut rng);
    secondary.shuffle(&mut rng);
    let mut pool = primary.into_iter().chain(secondary).cloned();

    let n = recs.len();
    let n_test = spec.test_cap.min(n);
    let n_dev = spec.dev_cap.min(n - n_test);
    let n_train = spec.train_cap.min(n - n_test - n_dev);
    let test: Vec<_> = pool.by_ref().take(n_test).collect();
    let dev: Vec<_> = pool.by_ref().take(n_dev).collect();
    let train: Vec<_> = pool.take(n_train).collect();
    (test, dev, train)
}

/// Drops external eval records whose (language, source) pair fed training.
pub fn external_eval_filter(
    external: &[SentenceRecord],
    train_provenance: &Provenance,
) -> Vec<SentenceRecord> {
    external
        .iter()
        .filter(|r| {
            !train_provenance
                .get(&r.lang)
                .is_some_and(|sources| sources.contains(&r.source_dataset))
        })
        .cloned()
        .collect()
}
