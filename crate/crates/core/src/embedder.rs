//! Self-contrastive sentence encoder.
//!
//! The encoder is a linear map over the hashed n-gram feature space: a
//! sentence is the count-weighted mean of its feature rows, L2-normalized.
//! Training duplicates each sentence into two views (random span deletion
//! plus feature dropout) and minimizes InfoNCE with in-batch negatives, so
//! the only supervision is "these two views came from the same sentence".

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{FormatError, Reader, Writer};
use crate::corpus::SentenceRecord;
use crate::features::{self, FeatureConfig, FeatureError, FeatureVector, Vocab};
use crate::vecmath::{axpy, dot, norm};

pub const EMBEDDER_MAGIC: [u8; 4] = *b"LIDE";

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("input produced no features")]
    EmptyInput,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("centroid of an empty group")]
    EmptyGroup,
    #[error("member embeddings cancel out; centroid has zero norm")]
    DegenerateCentroid,
    #[error("contrastive batch needs at least 2 sentences, got {0}")]
    DegenerateBatch(usize),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedderHyper {
    pub tau: f64,
    pub span_mask_len: u32,
    pub batch_size: u32,
    pub max_length: u32,
    pub epochs: u32,
    pub feature_dropout: f64,
    pub lr: f64,
    pub dim: u32,
    pub seed: u64,
}

impl Default for EmbedderHyper {
    fn default() -> Self {
        EmbedderHyper {
            tau: 0.04,
            span_mask_len: 5,
            batch_size: 200,
            max_length: 50,
            epochs: 1,
            feature_dropout: 0.05,
            lr: 0.05,
            dim: 256,
            seed: 0,
        }
    }
}

impl EmbedderHyper {
    pub fn validate(&self) -> Result<(), EmbedderError> {
        let bad = |m: &str| Err(EmbedderError::InvalidHyper(m.into()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be > 0");
        }
        if !(0.0..1.0).contains(&self.feature_dropout) {
            return bad("feature_dropout must be in [0, 1)");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if self.dim < 1 || self.epochs < 1 || self.max_length < 1 {
            return bad("dim, epochs and max_length must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        Ok(())
    }
}

/// Anything that maps a sentence to a unit vector. `None` when the text
/// cannot be encoded.
pub trait SentenceEncoder {
    fn encode(&self, text: &str) -> Option<Vec<f32>>;
}

/// Removes `len` characters starting at character `offset`.
pub fn delete_span(text: &str, offset: usize, len: usize) -> String {
    text.chars()
        .enumerate()
        .filter(|&(i, _)| i < offset || i >= offset + len)
        .map(|(_, c)| c)
        .collect()
}

/// Span length actually deleted from a `n`-character text. Capped at half
/// the text (rounded up), and always leaves at least one character.
pub fn span_len(n: usize, span_mask_len: usize) -> usize {
    span_mask_len.min(n.div_ceil(2)).min(n.saturating_sub(1))
}

fn mask_one<R: Rng>(text: &str, n: usize, span: usize, rng: &mut R) -> String {
    let k = span_len(n, span);
    if k == 0 {
        return text.to_owned();
    }
    let offset = rng.gen_range(0..=n - k);
    delete_span(text, offset, k)
}

/// Two independently span-masked views of `text`.
pub fn augment<R: Rng>(
    text: &str,
    span_mask_len: usize,
    rng: &mut R,
) -> Result<(String, String), EmbedderError> {
    let n = text.chars().count();
    if n == 0 {
        return Err(EmbedderError::EmptyInput);
    }
    let a = mask_one(text, n, span_mask_len, rng);
    let b = mask_one(text, n, span_mask_len, rng);
    Ok((a, b))
}

/// Drops each feature occurrence with probability `rate`; keeps the input
/// unchanged if everything would be dropped.
fn dropout<R: Rng>(ids: Vec<u32>, rate: f64, rng: &mut R) -> Vec<u32> {
    if rate <= 0.0 {
        return ids;
    }
    let kept: Vec<u32> = ids.iter().copied().filter(|_| !rng.gen_bool(rate)).collect();
    if kept.is_empty() {
        ids
    } else {
        kept
    }
}

/// InfoNCE over `2B` vectors laid out as `[a_0..a_B, b_0..b_B]`, where
/// `(a_i, b_i)` are positives. Anchors are the `a_i`; each denominator
/// runs over every other vector in the batch.
pub fn info_nce<T: Float>(views: &[Vec<T>], tau: T) -> Result<T, EmbedderError> {
    let b = check_batch(views)?;
    let inv_tau = T::one() / tau;
    let mut total = T::zero();
    for i in 0..b {
        let logits: Vec<T> = (0..2 * b)
            .filter(|&j| j != i)
            .map(|j| dot(&views[i], &views[j]) * inv_tau)
            .collect();
        let pos = dot(&views[i], &views[i + b]) * inv_tau;
        total = total + log_sum_exp(&logits) - pos;
    }
    Ok(total / T::from(b).unwrap())
}

fn check_batch<T>(views: &[Vec<T>]) -> Result<usize, EmbedderError> {
    if views.len() % 2 != 0 || views.len() < 4 {
        return Err(EmbedderError::DegenerateBatch(views.len() / 2));
    }
    Ok(views.len() / 2)
}

fn log_sum_exp<T: Float>(xs: &[T]) -> T {
    let m = xs.iter().fold(T::neg_infinity(), |a, &x| a.max(x));
    m + xs.iter().fold(T::zero(), |a, &x| a + (x - m).exp()).ln()
}

/// InfoNCE of the L2-normalized `raw` vectors, with gradients w.r.t. the
/// raw (pre-normalization) vectors.
pub fn info_nce_raw_grad<T: Float>(
    raw: &[Vec<T>],
    tau: T,
) -> Result<(T, Vec<Vec<T>>), EmbedderError> {
    let b = check_batch(raw)?;
    let norms: Vec<T> = raw
        .iter()
        .map(|x| norm(x).max(T::from(1e-12).unwrap()))
        .collect();
    let unit: Vec<Vec<T>> = raw
        .iter()
        .zip(&norms)
        .map(|(x, &n)| x.iter().map(|&v| v / n).collect())
        .collect();
    let dim = raw[0].len();
    let inv_tau = T::one() / tau;
    let scale = inv_tau / T::from(b).unwrap();
    let mut g_unit = vec![vec![T::zero(); dim]; 2 * b];
    let mut total = T::zero();
    for i in 0..b {
        let others: Vec<usize> = (0..2 * b).filter(|&j| j != i).collect();
        let mut q: Vec<T> = others
            .iter()
            .map(|&j| dot(&unit[i], &unit[j]) * inv_tau)
            .collect();
        total = total + log_sum_exp(&q) - dot(&unit[i], &unit[i + b]) * inv_tau;
        crate::vecmath::softmax_in_place(&mut q);
        for (&j, &qj) in others.iter().zip(&q) {
            let coef = (qj - if j == i + b { T::one() } else { T::zero() }) * scale;
            axpy(coef, &unit[j], &mut g_unit[i]);
            axpy(coef, &unit[i], &mut g_unit[j]);
        }
    }
    // Through the normalization: d/dx (x/|x|) applied to g is (g - (g.u)u)/|x|.
    let grads = g_unit
        .into_iter()
        .zip(unit.iter().zip(&norms))
        .map(|(g, (u, &n))| {
            let gu = dot(&g, u);
            g.iter().zip(u).map(|(&gk, &uk)| (gk - gu * uk) / n).collect()
        })
        .collect();
    Ok((total / T::from(b).unwrap(), grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderReport {
    pub batch_losses: Vec<f64>,
    /// Sentences that produced no features and were left out.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    vocab: Vocab,
    cfg: FeatureConfig,
    hyper: EmbedderHyper,
    encoder: Vec<f32>,
}

fn mean_rows(encoder: &[f32], dim: usize, fv: &FeatureVector) -> Vec<f64> {
    let mut x = vec![0f64; dim];
    let inv_n = 1.0 / f64::from(fv.total);
    for &(id, c) in &fv.entries {
        let row = &encoder[id as usize * dim..(id as usize + 1) * dim];
        let w = f64::from(c) * inv_n;
        for (xk, &r) in x.iter_mut().zip(row) {
            *xk += w * f64::from(r);
        }
    }
    x
}

pub fn train_embedder(
    corpus: &[SentenceRecord],
    hyper: &EmbedderHyper,
    cfg: &FeatureConfig,
) -> Result<EmbeddingModel, EmbedderError> {
    train_embedder_with_report(corpus, hyper, cfg).map(|(m, _)| m)
}

pub fn train_embedder_with_report(
    corpus: &[SentenceRecord],
    hyper: &EmbedderHyper,
    cfg: &FeatureConfig,
) -> Result<(EmbeddingModel, EmbedderReport), EmbedderError> {
    hyper.validate()?;
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(EmbedderError::EmptyCorpus);
    }
    let vocab = features::build_vocab_from_records(corpus, cfg)?;
    let mut model = EmbeddingModel::init(vocab, *cfg, *hyper);
    let max_tokens = Some(hyper.max_length as usize);
    let usable: Vec<&str> = corpus
        .iter()
        .map(|r| r.text.as_str())
        .filter(|t| !features::extract_ids(t, &model.vocab, cfg, max_tokens).is_empty())
        .collect();
    let skipped = corpus.len() - usable.len();
    if usable.len() < 2 {
        return Err(EmbedderError::EmptyCorpus);
    }

    let dim = hyper.dim as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5EED_E11B);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut batch_losses = Vec::new();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size as usize) {
            if batch.len() < 2 {
                continue;
            }
            let mut views_a = Vec::with_capacity(batch.len());
            let mut views_b = Vec::with_capacity(batch.len());
            for &i in batch {
                let (a, b) = augment(usable[i], hyper.span_mask_len as usize, &mut rng)?;
                views_a.push(model.view_features(&a, &mut rng));
                views_b.push(model.view_features(&b, &mut rng));
            }
            let fvs: Vec<FeatureVector> = views_a.into_iter().chain(views_b).collect();
            let raw: Vec<Vec<f64>> = fvs.iter().map(|fv| mean_rows(&model.encoder, dim, fv)).collect();
            let (loss, grads) = info_nce_raw_grad(&raw, hyper.tau)?;
            batch_losses.push(loss);
            for (fv, g) in fvs.iter().zip(&grads) {
                let inv_n = 1.0 / f64::from(fv.total);
                for &(id, c) in &fv.entries {
                    let step = (hyper.lr * f64::from(c) * inv_n) as f32;
                    let row = &mut model.encoder[id as usize * dim..(id as usize + 1) * dim];
                    for (r, &gk) in row.iter_mut().zip(g) {
                        *r -= step * gk as f32;
                    }
                }
            }
        }
    }
    Ok((model, EmbedderReport { batch_losses, skipped }))
}

impl EmbeddingModel {
    /// Untrained encoder with rows uniform in `[-1/sqrt(d), 1/sqrt(d)]`.
    pub fn init(vocab: Vocab, cfg: FeatureConfig, hyper: EmbedderHyper) -> Self {
        let dim = hyper.dim as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let bound = 1.0 / (dim as f32).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let encoder = (0..vocab.n_features() * dim).map(|_| dist.sample(&mut rng)).collect();
        EmbeddingModel { vocab, cfg, hyper, encoder }
    }

    pub fn hyper(&self) -> &EmbedderHyper {
        &self.hyper
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim as usize
    }

    fn features(&self, text: &str) -> FeatureVector {
        FeatureVector::from_ids(features::extract_ids(
            text,
            &self.vocab,
            &self.cfg,
            Some(self.hyper.max_length as usize),
        ))
    }

    fn view_features<R: Rng>(&self, text: &str, rng: &mut R) -> FeatureVector {
        let ids = features::extract_ids(text, &self.vocab, &self.cfg, Some(self.hyper.max_length as usize));
        FeatureVector::from_ids(dropout(ids, self.hyper.feature_dropout, rng))
    }

    fn unit(x: Vec<f64>) -> Option<Vec<f32>> {
        let n = norm(&x);
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(x.iter().map(|&v| (v / n) as f32).collect())
    }

    /// L2-normalized mean of feature rows; input is truncated to
    /// `max_length` tokens.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedderError> {
        let fv = self.features(text);
        if fv.is_empty() {
            return Err(EmbedderError::EmptyInput);
        }
        Self::unit(mean_rows(&self.encoder, self.dim(), &fv)).ok_or(EmbedderError::EmptyInput)
    }

    /// Embedding of one augmented view, as seen during training.
    pub fn embed_view<R: Rng>(&self, text: &str, rng: &mut R) -> Option<Vec<f32>> {
        let fv = self.view_features(text, rng);
        if fv.is_empty() {
            return None;
        }
        Self::unit(mean_rows(&self.encoder, self.dim(), &fv))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedderError> {
        let file = File::create(path).map_err(FormatError::from)?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedderError> {
        let file = File::open(path).map_err(FormatError::from)?;
        Self::read_from(BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), EmbedderError> {
        let h = &self.hyper;
        let mut w = Writer::new(w);
        let res: std::io::Result<()> = (|| {
            w.header(EMBEDDER_MAGIC)?;
            w.feature_config(&self.cfg)?;
            w.f64(h.tau)?;
            w.u32(h.span_mask_len)?;
            w.u32(h.batch_size)?;
            w.u32(h.max_length)?;
            w.u32(h.epochs)?;
            w.f64(h.feature_dropout)?;
            w.f64(h.lr)?;
            w.u32(h.dim)?;
            w.u64(h.seed)?;
            w.vocab(&self.vocab)?;
            w.u64(self.vocab.n_features() as u64)?;
            w.u32(h.dim)?;
            w.f32s(&self.encoder)
        })();
        res.map_err(FormatError::from)?;
        w.finish().map_err(FormatError::from)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, EmbedderError> {
        let mut r = Reader::new(r);
        r.header(EMBEDDER_MAGIC)?;
        let cfg = r.feature_config()?;
        let hyper = EmbedderHyper {
            tau: r.f64()?,
            span_mask_len: r.u32()?,
            batch_size: r.u32()?,
            max_length: r.u32()?,
            epochs: r.u32()?,
            feature_dropout: r.f64()?,
            lr: r.f64()?,
            dim: r.u32()?,
            seed: r.u64()?,
        };
        hyper
            .validate()
            .map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let vocab = r.vocab(cfg.bucket)?;
        let (rows, cols) = (r.u64()? as usize, r.u32()? as usize);
        if rows != vocab.n_features() || cols != hyper.dim as usize {
            return Err(FormatError::Corrupt("matrix dimensions disagree with header".into()).into());
        }
        let encoder = r.f32s(rows * cols)?;
        r.expect_end()?;
        if encoder.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::Corrupt("non-finite weight".into()).into());
        }
        Ok(EmbeddingModel { vocab, cfg, hyper, encoder })
    }
}

impl SentenceEncoder for EmbeddingModel {
    fn encode(&self, text: &str) -> Option<Vec<f32>> {
        self.embed(text).ok()
    }
}

/// L2-normalized arithmetic mean of member embeddings.
pub fn centroid(embeddings: &[Vec<f32>]) -> Result<Vec<f32>, EmbedderError> {
    let first = embeddings.first().ok_or(EmbedderError::EmptyGroup)?;
    let mut sum = vec![0f64; first.len()];
    for e in embeddings {
        for (s, &v) in sum.iter_mut().zip(e) {
            *s += f64::from(v);
        }
    }
    let n = norm(&sum);
    if n <= 1e-9 * embeddings.len() as f64 {
        return Err(EmbedderError::DegenerateCentroid);
    }
    Ok(sum.iter().map(|&v| (v / n) as f32).collect())
}

/// Mean cosine between two augmented views of the same sentence, minus the
/// mean cosine between clean embeddings of randomly paired different
/// sentences.
pub fn separation_gap(model: &EmbeddingModel, texts: &[&str], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = model.hyper.span_mask_len as usize;
    let (mut same, mut n_same) = (0f64, 0usize);
    let (mut cross, mut n_cross) = (0f64, 0usize);
    for (i, t) in texts.iter().enumerate() {
        if let Ok((a, b)) = augment(t, span, &mut rng) {
            if let (Some(x), Some(y)) = (model.embed_view(&a, &mut rng), model.embed_view(&b, &mut rng)) {
                same += f64::from(dot(&x, &y));
                n_same += 1;
            }
        }
        if texts.len() > 1 {
            let mut j = rng.gen_range(0..texts.len() - 1);
            if j >= i {
                j += 1;
            }
            if let (Ok(x), Ok(y)) = (model.embed(t), model.embed(texts[j])) {
                cross += f64::from(dot(&x, &y));
                n_cross += 1;
            }
        }
    }
    same / n_same.max(1) as f64 - cross / n_cross.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tier;
    use crate::langmeta::LangCode;
    use proptest::prelude::{prop_assert, proptest};

    fn small_cfg() -> FeatureConfig {
        FeatureConfig { bucket: 5_000, min_count: 1, ..FeatureConfig::default() }
    }

    fn corpus(n: usize, seed: u64) -> Vec<SentenceRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let letters: Vec<char> = "abcdefghijklmnop".chars().collect();
        (0..n)
            .map(|_| {
                let words: Vec<String> = (0..rng.gen_range(3..9))
                    .map(|_| (0..rng.gen_range(2..7)).map(|_| letters[rng.gen_range(0..16)]).collect())
                    .collect();
                SentenceRecord::new(words.join(" "), LangCode::new("aaa").unwrap(), Tier::Primary)
            })
            .collect()
    }

    #[test]
    fn augment_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            augment("abc def", 0, &mut rng).unwrap(),
            ("abc def".to_owned(), "abc def".to_owned())
        );
        assert_eq!(delete_span("abcdefgh", 2, 5), "abh");
        assert_eq!(span_len(2, 5), 1);
        assert_eq!(span_len(8, 5), 4);
        assert_eq!(span_len(20, 5), 5);
        assert_eq!(span_len(1, 5), 0);
        let (a, b) = augment("xy", 5, &mut rng).unwrap();
        assert_eq!((a.chars().count(), b.chars().count()), (1, 1));
        assert!(matches!(augment("", 5, &mut rng), Err(EmbedderError::EmptyInput)));
    }

    #[test]
    fn info_nce_closed_forms() {
        // Positives identical, every cross pair orthogonal, tau = 1.
        let views = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ];
        let e = std::f64::consts::E;
        let expected = -(e / (e + 2.0)).ln();
        assert!((info_nce(&views, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.551_444_713).abs() < 1e-6);

        let same = vec![vec![0.6, 0.8]; 4];
        assert!((info_nce(&same, 0.3).unwrap() - 3f64.ln()).abs() < 1e-12);

        let mut prev = f64::INFINITY;
        for tau in [2.0, 1.0, 0.5, 0.1, 0.04] {
            let l = info_nce(&views, tau).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(matches!(
            info_nce(&views[..2], 1.0),
            Err(EmbedderError::DegenerateBatch(1))
        ));
    }

    #[test]
    fn info_nce_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let unit = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&v);
            v.iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let views: Vec<Vec<f64>> = (0..6).map(|_| unit(&mut rng)).collect();
        let (s, c) = 0.7f64.sin_cos();
        let rotated: Vec<Vec<f64>> = views
            .iter()
            .map(|v| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]])
            .collect();
        let a = info_nce(&views, 0.04).unwrap();
        let b = info_nce(&rotated, 0.04).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn raw_grad_loss_matches_unit_loss() {
        let raw = vec![vec![3.0, 4.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]];
        let unit: Vec<Vec<f64>> = raw
            .iter()
            .map(|v| {
                let n = norm(v);
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        let (l, _) = info_nce_raw_grad(&raw, 0.5).unwrap();
        assert!((l - info_nce(&unit, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn centroid_examples() {
        let e = vec![0.6f32, 0.8];
        assert_eq!(centroid(std::slice::from_ref(&e)).unwrap(), e);
        let neg: Vec<f32> = e.iter().map(|x| -x).collect();
        assert!(matches!(centroid(&[e, neg]), Err(EmbedderError::DegenerateCentroid)));
        assert!(matches!(centroid(&[]), Err(EmbedderError::EmptyGroup)));
    }

    #[test]
    fn no_augmentation_gives_identical_views() {
        let recs = corpus(20, 3);
        let hyper = EmbedderHyper { dim: 16, feature_dropout: 0.0, span_mask_len: 0, ..Default::default() };
        let m = EmbeddingModel::init(
            features::build_vocab_from_records(&recs, &small_cfg()).unwrap(),
            small_cfg(),
            hyper,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for r in &recs {
            let (a, b) = augment(&r.text, 0, &mut rng).unwrap();
            assert_eq!(m.embed_view(&a, &mut rng), m.embed_view(&b, &mut rng));
        }
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let recs = corpus(60, 4);
        let hyper = EmbedderHyper { dim: 16, batch_size: 16, seed: 42, ..Default::default() };
        let a = train_embedder(&recs, &hyper, &small_cfg()).unwrap();
        let b = train_embedder(&recs, &hyper, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let mut bytes = Vec::new();
        a.write_to(&mut bytes).unwrap();
        assert_eq!(EmbeddingModel::read_from(bytes.as_slice()).unwrap(), a);
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"LIDF");
        assert!(matches!(
            EmbeddingModel::read_from(bad.as_slice()),
            Err(EmbedderError::Format(FormatError::BadMagic { .. }))
        ));
        assert!(matches!(
            EmbeddingModel::read_from(&bytes[..bytes.len() - 1]),
            Err(EmbedderError::Format(FormatError::TruncatedFile))
        ));
    }

    #[test]
    fn small_final_batch_policy() {
        let recs = corpus(33, 6);
        let hyper = EmbedderHyper { dim: 8, batch_size: 16, ..Default::default() };
        let (_, rep) = train_embedder_with_report(&recs, &hyper, &small_cfg()).unwrap();
        // 16 + 16 + 1: the trailing singleton is dropped.
        assert_eq!(rep.batch_losses.len(), 2);
        let recs = corpus(34, 6);
        let (_, rep) = train_embedder_with_report(&recs, &hyper, &small_cfg()).unwrap();
        assert_eq!(rep.batch_losses.len(), 3);
        assert!(matches!(
            train_embedder(&[], &hyper, &small_cfg()),
            Err(EmbedderError::EmptyCorpus)
        ));
    }

    proptest! {
        #[test]
        fn embed_is_unit_norm(text in "[a-p ]{1,40}") {
            let recs = corpus(10, 1);
            let m = EmbeddingModel::init(
                features::build_vocab_from_records(&recs, &small_cfg()).unwrap(),
                small_cfg(),
                EmbedderHyper { dim: 16, ..Default::default() },
            );
            if let Ok(e) = m.embed(&text) {
                let n: f32 = e.iter().map(|x| x * x).sum::<f32>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-6);
            }
        }
    }
}
