//! Seeded synthetic languages for tests, benches and desk-scale experiments.
//!
//! Two kinds of generator: order-2 character Markov chains (distinct but
//! overlapping letter statistics), and fixed-vocabulary languages whose word
//! lists can be made to overlap by a chosen fraction.

use std::collections::{HashMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{SentenceRecord, Tier};
use crate::embedder::SentenceEncoder;
use crate::langmeta::LangCode;

const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

/// Private-use style code `q` + two letters, distinct for `i < 676`.
pub fn synthetic_code(i: usize) -> LangCode {
    let b = LETTERS.as_bytes();
    let s = [b'q', b[(i / 26) % 26], b[i % 26]];
    LangCode::new(std::str::from_utf8(&s).expect("ascii")).expect("valid code")
}

/// Order-2 character Markov chain over a 26-letter alphabet.
#[derive(Debug, Clone)]
pub struct MarkovLanguage {
    alphabet: Vec<char>,
    /// Successor distribution per context `(prev2, prev1)`; index 26 = start.
    table: Vec<WeightedIndex<f64>>,
}

impl MarkovLanguage {
    /// Each context allows a handful of random successors with random weights.
    pub fn random<R: Rng>(rng: &mut R, branching: usize) -> Self {
        let alphabet: Vec<char> = LETTERS.chars().collect();
        let k = alphabet.len();
        let table = (0..(k + 1) * (k + 1))
            .map(|_| {
                let mut w = vec![0f64; k];
                for _ in 0..branching.max(1) {
                    w[rng.gen_range(0..k)] += rng.gen_range(0.2..1.0);
                }
                WeightedIndex::new(&w).expect("positive weights")
            })
            .collect();
        MarkovLanguage { alphabet, table }
    }

    pub fn word<R: Rng>(&self, rng: &mut R, len: usize) -> String {
        let k = self.alphabet.len();
        let (mut a, mut b) = (k, k);
        let mut out = String::with_capacity(len);
        for _ in 0..len {
            let c = self.table[a * (k + 1) + b].sample(rng);
            out.push(self.alphabet[c]);
            a = b;
            b = c;
        }
        out
    }

    pub fn sentence<R: Rng>(&self, rng: &mut R) -> String {
        let n = rng.gen_range(5..=12);
        (0..n)
            .map(|_| {
                let len = rng.gen_range(2..=8);
                self.word(rng, len)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A language whose sentences draw uniformly from a fixed word list.
#[derive(Debug, Clone)]
pub struct VocabLanguage {
    pub words: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
}

impl VocabLanguage {
    pub fn sentence<R: Rng>(&self, rng: &mut R) -> String {
        let n = rng.gen_range(self.min_words..=self.max_words);
        (0..n)
            .map(|_| self.words.choose(rng).expect("non-empty word list").as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn distinct_words<R: Rng>(
    gen: &MarkovLanguage,
    n: usize,
    taken: &mut HashSet<String>,
    rng: &mut R,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(3..=7);
        let w = gen.word(rng, len);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Two vocabulary languages sharing `shared` of their words. The shared words
/// come from one character chain; each language's own words follow a chain
/// of its own, so the remainder differs in spelling as well as identity.
pub fn confusable_pair<R: Rng>(
    rng: &mut R,
    vocab_size: usize,
    shared: f64,
    words_per_sentence: (usize, usize),
) -> (VocabLanguage, VocabLanguage) {
    let gen = MarkovLanguage::random(rng, 5);
    let (gen_a, gen_b) = (MarkovLanguage::random(rng, 5), MarkovLanguage::random(rng, 5));
    let n_shared = (vocab_size as f64 * shared).round() as usize;
    let mut taken = HashSet::new();
    let common = distinct_words(&gen, n_shared, &mut taken, rng);
    let own_a = distinct_words(&gen_a, vocab_size - n_shared, &mut taken, rng);
    let own_b = distinct_words(&gen_b, vocab_size - n_shared, &mut taken, rng);
    let make = |own: Vec<String>| VocabLanguage {
        words: common.iter().cloned().chain(own).collect(),
        min_words: words_per_sentence.0,
        max_words: words_per_sentence.1,
    };
    (make(own_a), make(own_b))
}

/// Train/dev/test records drawn from per-language sentence generators.
#[derive(Debug, Clone, Default)]
pub struct SynthCorpus {
    pub train: Vec<SentenceRecord>,
    pub dev: Vec<SentenceRecord>,
    pub test: Vec<SentenceRecord>,
}

impl SynthCorpus {
    pub fn languages(&self) -> Vec<LangCode> {
        let mut l: Vec<LangCode> = self.train.iter().map(|r| r.lang).collect();
        l.sort();
        l.dedup();
        l
    }
}

/// Draws `sizes` sentences per language for each split. Texts are unique
/// across the whole corpus, so a text identifies its language.
pub fn draw_corpus<R, F>(
    rng: &mut R,
    langs: &[(LangCode, F)],
    sizes: (usize, usize, usize),
) -> SynthCorpus
where
    R: Rng,
    F: Fn(&mut R) -> String,
{
    let mut seen = HashSet::new();
    let mut corpus = SynthCorpus::default();
    for (code, gen) in langs {
        for (split, n) in [(0, sizes.0), (1, sizes.1), (2, sizes.2)] {
            let mut made = 0;
            let mut attempts = 0;
            while made < n {
                attempts += 1;
                assert!(attempts < 1000 * (n + 1), "generator for {code} keeps repeating itself");
                let text = gen(rng);
                if !seen.insert(text.clone()) {
                    continue;
                }
                let rec = SentenceRecord::new(text, *code, Tier::Primary);
                match split {
                    0 => corpus.train.push(rec),
                    1 => corpus.dev.push(rec),
                    _ => corpus.test.push(rec),
                }
                made += 1;
            }
        }
    }
    corpus
}

/// `n` Markov-chain languages.
pub fn markov_corpus(n_langs: usize, sizes: (usize, usize, usize), seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let langs: Vec<(LangCode, MarkovLanguage)> = (0..n_langs)
        .map(|i| (synthetic_code(i), MarkovLanguage::random(&mut rng, 4)))
        .collect();
    let gens: Vec<(LangCode, Box<dyn Fn(&mut ChaCha8Rng) -> String>)> = langs
        .into_iter()
        .map(|(c, m)| (c, Box::new(move |r: &mut ChaCha8Rng| m.sentence(r)) as Box<dyn Fn(&mut ChaCha8Rng) -> String>))
        .collect();
    draw_corpus(&mut rng, &gens, sizes)
}

/// A confusable vocabulary pair (codes `qaa`, `qab`) plus `n_easy` Markov
/// languages.
pub fn confusable_corpus(
    n_easy: usize,
    shared: f64,
    sizes: (usize, usize, usize),
    seed: u64,
) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = confusable_pair(&mut rng, 300, shared, (2, 4));
    type Gen = Box<dyn Fn(&mut ChaCha8Rng) -> String>;
    let mut gens: Vec<(LangCode, Gen)> = vec![
        (synthetic_code(0), Box::new(move |r: &mut ChaCha8Rng| a.sentence(r))),
        (synthetic_code(1), Box::new(move |r: &mut ChaCha8Rng| b.sentence(r))),
    ];
    for i in 0..n_easy {
        let m = MarkovLanguage::random(&mut rng, 4);
        gens.push((synthetic_code(2 + i), Box::new(move |r: &mut ChaCha8Rng| m.sentence(r))));
    }
    draw_corpus(&mut rng, &gens, sizes)
}

/// Encoder that knows each sentence's true language and returns its one-hot
/// vector. Unknown text cannot be encoded.
#[derive(Debug, Clone, Default)]
pub struct OracleEncoder {
    lookup: HashMap<String, usize>,
    dim: usize,
}

impl OracleEncoder {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a SentenceRecord>) -> Self {
        let recs: Vec<&SentenceRecord> = records.into_iter().collect();
        let mut langs: Vec<LangCode> = recs.iter().map(|r| r.lang).collect();
        langs.sort();
        langs.dedup();
        let lookup = recs
            .iter()
            .map(|r| (r.text.clone(), langs.binary_search(&r.lang).expect("collected")))
            .collect();
        OracleEncoder { lookup, dim: langs.len() }
    }
}

impl SentenceEncoder for OracleEncoder {
    fn encode(&self, text: &str) -> Option<Vec<f32>> {
        let &i = self.lookup.get(text)?;
        let mut v = vec![0f32; self.dim];
        v[i] = 1.0;
        Some(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let codes: HashSet<LangCode> = (0..100).map(synthetic_code).collect();
        assert_eq!(codes.len(), 100);
        assert_eq!(synthetic_code(0).as_str(), "qaa");
        assert_eq!(synthetic_code(27).as_str(), "qbb");
    }

    #[test]
    fn corpus_is_seeded_and_unique() {
        let a = markov_corpus(3, (20, 5, 5), 7);
        let b = markov_corpus(3, (20, 5, 5), 7);
        assert_eq!(a.train, b.train);
        assert_eq!(a.train.len(), 60);
        let texts: HashSet<&str> = a.train.iter().chain(&a.dev).chain(&a.test).map(|r| r.text.as_str()).collect();
        assert_eq!(texts.len(), 90);
        assert_ne!(markov_corpus(3, (20, 5, 5), 8).train, a.train);
    }

    #[test]
    fn pair_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = confusable_pair(&mut rng, 100, 0.8, (2, 4));
        let sa: HashSet<_> = a.words.iter().collect();
        let shared = b.words.iter().filter(|w| sa.contains(w)).count();
        assert_eq!(shared, 80);
    }

    #[test]
    fn oracle_is_one_hot() {
        let c = markov_corpus(2, (5, 0, 0), 1);
        let o = OracleEncoder::new(&c.train);
        let v = o.encode(&c.train[7].text).unwrap();
        assert_eq!(v, vec![0.0, 1.0]);
        assert!(o.encode("never seen").is_none());
    }
}
