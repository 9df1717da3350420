//! Linear bag-of-features softmax classifier.
//!
//! A sentence is the count-weighted mean `h` of its feature embeddings
//! (rows of the input matrix). Label scores are `W·h`, probabilities their
//! softmax, and training minimizes `-log p[gold]` with plain SGD on both
//! matrices. The learning rate decays linearly from `lr0` to zero over all
//! processed examples; examples are visited in a seeded shuffle each epoch.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{FormatError, Reader, Writer};
use crate::corpus::SentenceRecord;
use crate::features::{self, FeatureConfig, FeatureError, FeatureVector, Vocab};
use crate::langmeta::LangCode;
use crate::par::Execution;
use crate::vecmath::{axpy, dot, softmax_in_place};

pub const CLASSIFIER_MAGIC: [u8; 4] = *b"LIDF";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("need at least 2 distinct labels, found {0}")]
    TooFewLabels(usize),
    #[error("no training example produced any feature")]
    NoUsableExamples,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// How the input (feature embedding) matrix is initialized. The output
/// matrix always starts at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputInit {
    /// Uniform in `[-1/dim, 1/dim]`, seeded.
    Uniform,
    /// All zeros. With a zero output matrix this is a stationary point of
    /// the loss, so it is only useful for inspecting untrained models.
    Zero,
}

impl InputInit {
    fn tag(self) -> u8 {
        match self {
            InputInit::Uniform => 0,
            InputInit::Zero => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self, FormatError> {
        match t {
            0 => Ok(InputInit::Uniform),
            1 => Ok(InputInit::Zero),
            _ => Err(FormatError::Corrupt(format!("unknown init tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHyper {
    pub dim: u32,
    pub epochs: u32,
    pub lr0: f64,
    pub seed: u64,
    pub init: InputInit,
}

impl Default for ClassifierHyper {
    fn default() -> Self {
        ClassifierHyper {
            dim: 256,
            epochs: 2,
            lr0: 0.8,
            seed: 0,
            init: InputInit::Uniform,
        }
    }
}

impl ClassifierHyper {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.dim < 1 {
            return Err(ClassifierError::InvalidHyper("dim must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(ClassifierError::InvalidHyper("epochs must be >= 1".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(ClassifierError::InvalidHyper("lr0 must be > 0".into()));
        }
        Ok(())
    }
}

/// Loss and gradients of `-log softmax(W·h)[gold]` for one example.
#[derive(Debug, Clone)]
pub struct XentGradients<T> {
    pub loss: T,
    /// Gradient w.r.t. the output matrix, `L × dim` row-major.
    pub output: Vec<T>,
    /// Gradient w.r.t. each contributing input row, in feature-id order.
    pub input_rows: Vec<(u32, Vec<T>)>,
}

/// Forward pass shared by training and the gradient checks. Writes the
/// hidden vector into `hidden` and the probabilities into `probs`.
fn forward<T: Float>(
    input: &[T],
    output: &[T],
    dim: usize,
    fv: &FeatureVector,
    hidden: &mut [T],
    probs: &mut [T],
) {
    hidden.iter_mut().for_each(|x| *x = T::zero());
    let inv_n = T::one() / T::from(fv.total).unwrap();
    for &(id, c) in &fv.entries {
        let row = &input[id as usize * dim..(id as usize + 1) * dim];
        axpy(T::from(c).unwrap() * inv_n, row, hidden);
    }
    for (l, p) in probs.iter_mut().enumerate() {
        *p = dot(&output[l * dim..(l + 1) * dim], hidden);
    }
    softmax_in_place(probs);
}

/// Loss only; used as the finite-difference target.
pub fn xent_loss<T: Float>(
    input: &[T],
    output: &[T],
    dim: usize,
    fv: &FeatureVector,
    gold: usize,
) -> T {
    let n_labels = output.len() / dim;
    let mut hidden = vec![T::zero(); dim];
    let mut probs = vec![T::zero(); n_labels];
    forward(input, output, dim, fv, &mut hidden, &mut probs);
    -probs[gold].ln()
}

/// Analytic gradients, computed the same way the SGD step computes them.
pub fn xent_gradients<T: Float>(
    input: &[T],
    output: &[T],
    dim: usize,
    fv: &FeatureVector,
    gold: usize,
) -> XentGradients<T> {
    let n_labels = output.len() / dim;
    let mut hidden = vec![T::zero(); dim];
    let mut probs = vec![T::zero(); n_labels];
    forward(input, output, dim, fv, &mut hidden, &mut probs);
    let loss = -probs[gold].ln();
    let mut grad_hidden = vec![T::zero(); dim];
    let mut grad_out = vec![T::zero(); n_labels * dim];
    for l in 0..n_labels {
        let coef = probs[l] - if l == gold { T::one() } else { T::zero() };
        axpy(coef, &output[l * dim..(l + 1) * dim], &mut grad_hidden);
        axpy(coef, &hidden, &mut grad_out[l * dim..(l + 1) * dim]);
    }
    let inv_n = T::one() / T::from(fv.total).unwrap();
    let input_rows = fv
        .entries
        .iter()
        .map(|&(id, c)| {
            let w = T::from(c).unwrap() * inv_n;
            (id, grad_hidden.iter().map(|&g| g * w).collect())
        })
        .collect();
    XentGradients {
        loss,
        output: grad_out,
        input_rows,
    }
}

struct Scratch<T> {
    hidden: Vec<T>,
    probs: Vec<T>,
    grad_hidden: Vec<T>,
}

impl<T: Float> Scratch<T> {
    fn new(dim: usize, n_labels: usize) -> Self {
        Scratch {
            hidden: vec![T::zero(); dim],
            probs: vec![T::zero(); n_labels],
            grad_hidden: vec![T::zero(); dim],
        }
    }
}

/// One SGD update; returns the pre-update loss.
fn sgd_step<T: Float>(
    input: &mut [T],
    output: &mut [T],
    dim: usize,
    fv: &FeatureVector,
    gold: usize,
    lr: T,
    s: &mut Scratch<T>,
) -> T {
    forward(input, output, dim, fv, &mut s.hidden, &mut s.probs);
    let loss = -s.probs[gold].max(T::min_positive_value()).ln();
    s.grad_hidden.iter_mut().for_each(|x| *x = T::zero());
    for l in 0..s.probs.len() {
        let coef = s.probs[l] - if l == gold { T::one() } else { T::zero() };
        let row = &mut output[l * dim..(l + 1) * dim];
        axpy(coef, row, &mut s.grad_hidden);
        axpy(-lr * coef, &s.hidden, row);
    }
    let inv_n = T::one() / T::from(fv.total).unwrap();
    for &(id, c) in &fv.entries {
        let w = T::from(c).unwrap() * inv_n;
        let row = &mut input[id as usize * dim..(id as usize + 1) * dim];
        axpy(-lr * w, &s.grad_hidden, row);
    }
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean pre-update loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Records skipped because they produced no features.
    pub skipped: usize,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    labels: Vec<LangCode>,
    vocab: Vocab,
    cfg: FeatureConfig,
    hyper: ClassifierHyper,
    input: Vec<f32>,
    output: Vec<f32>,
}

struct Prepared {
    labels: Vec<LangCode>,
    vocab: Vocab,
    examples: Vec<(FeatureVector, usize)>,
    skipped: usize,
}

fn prepare(
    records: &[SentenceRecord],
    hyper: &ClassifierHyper,
    cfg: &FeatureConfig,
    exec: Execution,
) -> Result<Prepared, ClassifierError> {
    hyper.validate()?;
    cfg.validate()?;
    let labels: Vec<LangCode> = records
        .iter()
        .map(|r| r.lang)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(ClassifierError::TooFewLabels(labels.len()));
    }
    let vocab = features::build_vocab_from_records(records, cfg)?;
    let fvs = exec.map(records, |r| features::extract(&r.text, &vocab, cfg));
    let mut examples = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for (r, fv) in records.iter().zip(fvs) {
        if fv.is_empty() {
            skipped += 1;
            continue;
        }
        let gold = labels.binary_search(&r.lang).expect("label collected above");
        examples.push((fv, gold));
    }
    if examples.is_empty() {
        return Err(ClassifierError::NoUsableExamples);
    }
    Ok(Prepared {
        labels,
        vocab,
        examples,
        skipped,
    })
}

fn init_input(n_rows: usize, hyper: &ClassifierHyper, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let dim = hyper.dim as usize;
    match hyper.init {
        InputInit::Zero => vec![0.0; n_rows * dim],
        InputInit::Uniform => {
            let bound = 1.0 / dim as f32;
            let dist = Uniform::new_inclusive(-bound, bound);
            (0..n_rows * dim).map(|_| dist.sample(rng)).collect()
        }
    }
}

pub fn train(
    records: &[SentenceRecord],
    hyper: &ClassifierHyper,
    cfg: &FeatureConfig,
) -> Result<ClassifierModel, ClassifierError> {
    train_with_report(records, hyper, cfg).map(|(m, _)| m)
}

/// Single-threaded, deterministic SGD.
pub fn train_with_report(
    records: &[SentenceRecord],
    hyper: &ClassifierHyper,
    cfg: &FeatureConfig,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    let prep = prepare(records, hyper, cfg, Execution::default())?;
    let dim = hyper.dim as usize;
    let n_labels = prep.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut input = init_input(prep.vocab.n_features(), hyper, &mut rng);
    let mut output = vec![0f32; n_labels * dim];
    let mut scratch = Scratch::<f32>::new(dim, n_labels);

    let n = prep.examples.len();
    let total_steps = (n * hyper.epochs as usize) as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(hyper.epochs as usize);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0f64;
        for &i in &order {
            let lr = (hyper.lr0 * (1.0 - processed as f64 / total_steps)) as f32;
            let (fv, gold) = &prep.examples[i];
            loss_sum += f64::from(sgd_step(
                &mut input,
                &mut output,
                dim,
                fv,
                *gold,
                lr,
                &mut scratch,
            ));
            processed += 1;
        }
        epoch_losses.push(loss_sum / n as f64);
    }

    let model = ClassifierModel {
        labels: prep.labels,
        vocab: prep.vocab,
        cfg: *cfg,
        hyper: *hyper,
        input,
        output,
    };
    let report = TrainReport {
        epoch_losses,
        skipped: prep.skipped,
        examples: n,
    };
    Ok((model, report))
}

/// Lock-free multi-threaded SGD over shared weights (Hogwild-style).
///
/// Workers race on weight rows, so results depend on scheduling and are not
/// reproducible across runs.
#[cfg(feature = "parallel")]
pub fn train_hogwild(
    records: &[SentenceRecord],
    hyper: &ClassifierHyper,
    cfg: &FeatureConfig,
    threads: usize,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering::Relaxed};

    let prep = prepare(records, hyper, cfg, Execution::Parallel)?;
    let dim = hyper.dim as usize;
    let n_labels = prep.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let to_atomic = |v: Vec<f32>| -> Vec<AtomicU32> {
        v.into_iter().map(|x| AtomicU32::new(x.to_bits())).collect()
    };
    let input = to_atomic(init_input(prep.vocab.n_features(), hyper, &mut rng));
    let output = to_atomic(vec![0f32; n_labels * dim]);
    let load = |a: &AtomicU32| f32::from_bits(a.load(Relaxed));
    let add = |a: &AtomicU32, d: f32| a.store((f32::from_bits(a.load(Relaxed)) + d).to_bits(), Relaxed);

    let n = prep.examples.len();
    let total_steps = (n * hyper.epochs as usize) as f64;
    let processed = AtomicUsize::new(0);
    let threads = threads.max(1);
    let mut epoch_losses = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let chunk = n.div_ceil(threads);
        let losses: Vec<f64> = std::thread::scope(|scope| {
            let handles: Vec<_> = order
                .chunks(chunk)
                .map(|part| {
                    let (input, output, processed, prep) = (&input, &output, &processed, &prep);
                    scope.spawn(move || {
                        let mut loss_sum = 0f64;
                        let mut local_out = vec![0f32; n_labels * dim];
                        let mut hidden = vec![0f32; dim];
                        let mut probs = vec![0f32; n_labels];
                        let mut grad_hidden = vec![0f32; dim];
                        for &i in part {
                            let step = processed.fetch_add(1, Relaxed);
                            let lr = (hyper.lr0 * (1.0 - step as f64 / total_steps)) as f32;
                            let (fv, gold) = &prep.examples[i];
                            hidden.iter_mut().for_each(|x| *x = 0.0);
                            let inv_n = 1.0 / fv.total as f32;
                            for &(id, c) in &fv.entries {
                                let base = id as usize * dim;
                                let w = c as f32 * inv_n;
                                for (k, h) in hidden.iter_mut().enumerate() {
                                    *h += w * load(&input[base + k]);
                                }
                            }
                            for (dst, src) in local_out.iter_mut().zip(output.iter()) {
                                *dst = load(src);
                            }
                            for (l, p) in probs.iter_mut().enumerate() {
                                *p = dot(&local_out[l * dim..(l + 1) * dim], &hidden);
                            }
                            softmax_in_place(&mut probs);
                            loss_sum += -f64::from(probs[*gold].max(f32::MIN_POSITIVE).ln());
                            grad_hidden.iter_mut().for_each(|x| *x = 0.0);
                            for l in 0..n_labels {
                                let coef = probs[l] - if l == *gold { 1.0 } else { 0.0 };
                                axpy(coef, &local_out[l * dim..(l + 1) * dim], &mut grad_hidden);
                                for k in 0..dim {
                                    add(&output[l * dim + k], -lr * coef * hidden[k]);
                                }
                            }
                            for &(id, c) in &fv.entries {
                                let base = id as usize * dim;
                                let w = c as f32 * inv_n;
                                for k in 0..dim {
                                    add(&input[base + k], -lr * w * grad_hidden[k]);
                                }
                            }
                        }
                        loss_sum
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        epoch_losses.push(losses.iter().sum::<f64>() / n as f64);
    }

    let from_atomic = |v: Vec<AtomicU32>| -> Vec<f32> {
        v.into_iter().map(|a| f32::from_bits(a.into_inner())).collect()
    };
    let model = ClassifierModel {
        labels: prep.labels,
        vocab: prep.vocab,
        cfg: *cfg,
        hyper: *hyper,
        input: from_atomic(input),
        output: from_atomic(output),
    };
    Ok((
        model,
        TrainReport {
            epoch_losses,
            skipped: prep.skipped,
            examples: n,
        },
    ))
}

impl ClassifierModel {
    /// Assembles a model from raw parts, checking shapes and label order.
    pub fn from_parts(
        labels: Vec<LangCode>,
        vocab: Vocab,
        cfg: FeatureConfig,
        hyper: ClassifierHyper,
        input: Vec<f32>,
        output: Vec<f32>,
    ) -> Result<Self, ClassifierError> {
        hyper.validate()?;
        cfg.validate()?;
        if labels.len() < 2 {
            return Err(ClassifierError::TooFewLabels(labels.len()));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ClassifierError::InvalidHyper(
                "labels must be sorted and unique".into(),
            ));
        }
        let dim = hyper.dim as usize;
        if vocab.bucket() != cfg.bucket
            || input.len() != vocab.n_features() * dim
            || output.len() != labels.len() * dim
        {
            return Err(ClassifierError::InvalidHyper("matrix shape mismatch".into()));
        }
        Ok(ClassifierModel {
            labels,
            vocab,
            cfg,
            hyper,
            input,
            output,
        })
    }

    pub fn labels(&self) -> &[LangCode] {
        &self.labels
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn feature_config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn hyper(&self) -> &ClassifierHyper {
        &self.hyper
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim as usize
    }

    pub fn input_matrix(&self) -> &[f32] {
        &self.input
    }

    pub fn output_matrix(&self) -> &[f32] {
        &self.output
    }

    pub fn label_index(&self, label: LangCode) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn features(&self, text: &str) -> FeatureVector {
        features::extract(text, &self.vocab, &self.cfg)
    }

    /// Count-weighted mean of feature rows, in f64; `None` for no features.
    pub fn hidden(&self, fv: &FeatureVector) -> Option<Vec<f64>> {
        if fv.is_empty() {
            return None;
        }
        let dim = self.dim();
        let mut h = vec![0f64; dim];
        let inv_n = 1.0 / f64::from(fv.total);
        for &(id, c) in &fv.entries {
            let row = &self.input[id as usize * dim..(id as usize + 1) * dim];
            let w = f64::from(c) * inv_n;
            for (hk, &x) in h.iter_mut().zip(row) {
                *hk += w * f64::from(x);
            }
        }
        Some(h)
    }

    /// Label scores `W·h` for a given hidden vector.
    pub fn scores(&self, hidden: &[f64]) -> Vec<f64> {
        let dim = self.dim();
        (0..self.labels.len())
            .map(|l| {
                self.output[l * dim..(l + 1) * dim]
                    .iter()
                    .zip(hidden)
                    .map(|(&w, &h)| f64::from(w) * h)
                    .sum()
            })
            .collect()
    }

    /// Full probability distribution over [`labels`](Self::labels).
    /// Uniform when the text yields no features.
    pub fn predict_proba(&self, text: &str) -> Vec<f64> {
        let fv = self.features(text);
        match self.hidden(&fv) {
            None => vec![1.0 / self.labels.len() as f64; self.labels.len()],
            Some(h) => {
                let mut p = self.scores(&h);
                softmax_in_place(&mut p);
                p
            }
        }
    }

    /// Top-`k` labels by probability; ties go to the earlier label.
    pub fn predict_topk(&self, text: &str, k: usize) -> Vec<(LangCode, f64)> {
        topk(&self.labels, &self.predict_proba(text), k)
    }

    pub fn predict_top1(&self, text: &str) -> (LangCode, f64) {
        self.predict_topk(text, 1)[0]
    }

    pub fn predict_batch(
        &self,
        texts: &[&str],
        k: usize,
        exec: Execution,
    ) -> Vec<Vec<(LangCode, f64)>> {
        exec.map(texts, |t| self.predict_topk(t, k))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let file = File::create(path).map_err(FormatError::from)?;
        self.write_to(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let file = File::open(path).map_err(FormatError::from)?;
        Self::read_from(BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<(), ClassifierError> {
        let mut w = Writer::new(w);
        let io = |r: std::io::Result<()>| r.map_err(FormatError::from);
        io(w.header(CLASSIFIER_MAGIC))?;
        io(w.feature_config(&self.cfg))?;
        io(w.u32(self.hyper.dim))?;
        io(w.u32(self.hyper.epochs))?;
        io(w.f64(self.hyper.lr0))?;
        io(w.u64(self.hyper.seed))?;
        io(w.u8(self.hyper.init.tag()))?;
        io(w.u32(self.labels.len() as u32))?;
        for l in &self.labels {
            io(w.str(l.as_str()))?;
        }
        io(w.vocab(&self.vocab))?;
        io(w.u64(self.vocab.n_features() as u64))?;
        io(w.u32(self.hyper.dim))?;
        io(w.u32(self.labels.len() as u32))?;
        io(w.u32(self.hyper.dim))?;
        io(w.f32s(&self.input))?;
        io(w.f32s(&self.output))?;
        w.finish().map_err(FormatError::from)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, ClassifierError> {
        let mut r = Reader::new(r);
        r.header(CLASSIFIER_MAGIC)?;
        let cfg = r.feature_config()?;
        let hyper = ClassifierHyper {
            dim: r.u32()?,
            epochs: r.u32()?,
            lr0: r.f64()?,
            seed: r.u64()?,
            init: InputInit::from_tag(r.u8()?)?,
        };
        let n_labels = r.u32()? as usize;
        let labels = (0..n_labels)
            .map(|_| {
                let s = r.str()?;
                LangCode::new(&s).map_err(|e| FormatError::Corrupt(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = r.vocab(cfg.bucket)?;
        let (in_rows, in_cols) = (r.u64()? as usize, r.u32()? as usize);
        let (out_rows, out_cols) = (r.u32()? as usize, r.u32()? as usize);
        let dim = hyper.dim as usize;
        if in_rows != vocab.n_features() || in_cols != dim || out_rows != n_labels || out_cols != dim
        {
            return Err(FormatError::Corrupt("matrix dimensions disagree with header".into()).into());
        }
        let input = r.f32s(in_rows * in_cols)?;
        let output = r.f32s(out_rows * out_cols)?;
        r.expect_end()?;
        if input.iter().chain(&output).any(|x| !x.is_finite()) {
            return Err(FormatError::Corrupt("non-finite weight".into()).into());
        }
        ClassifierModel::from_parts(labels, vocab, cfg, hyper, input, output).map_err(|e| match e {
            ClassifierError::Format(f) => ClassifierError::Format(f),
            other => ClassifierError::Format(FormatError::Corrupt(other.to_string())),
        })
    }
}

pub(crate) fn topk(labels: &[LangCode], probs: &[f64], k: usize) -> Vec<(LangCode, f64)> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    // Stable sort keeps label order among equal probabilities.
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    idx.into_iter()
        .take(k.max(1))
        .map(|i| (labels[i], probs[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tier;
    use rand::Rng;

    fn code(s: &str) -> LangCode {
        LangCode::new(s).unwrap()
    }

    fn small_cfg() -> FeatureConfig {
        FeatureConfig { bucket: 2_000, min_count: 1, ..FeatureConfig::default() }
    }

    fn zero_model(n_labels: usize) -> ClassifierModel {
        let cfg = small_cfg();
        let hyper = ClassifierHyper { dim: 8, init: InputInit::Zero, ..ClassifierHyper::default() };
        let labels: Vec<LangCode> = ["aaa", "bbb", "ccc", "ddd"][..n_labels]
            .iter()
            .map(|s| code(s))
            .collect();
        let vocab = Vocab::from_words(vec![], cfg.bucket);
        let input = vec![0.0; vocab.n_features() * 8];
        ClassifierModel::from_parts(labels, vocab, cfg, hyper, input, vec![0.0; n_labels * 8])
            .unwrap()
    }

    fn two_script_corpus(n: usize, seed: u64) -> Vec<SentenceRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha: [&[char]; 2] = [&['a', 'b', 'c', 'd', 'e'], &['ሀ', 'ለ', 'ሐ', 'መ', 'ሠ']];
        let mut out = Vec::new();
        for (li, lang) in ["aaa", "bbb"].iter().enumerate() {
            for _ in 0..n {
                let words: Vec<String> = (0..rng.gen_range(3..8))
                    .map(|_| {
                        (0..rng.gen_range(2..6))
                            .map(|_| alpha[li][rng.gen_range(0..5)])
                            .collect()
                    })
                    .collect();
                out.push(SentenceRecord::new(words.join(" "), code(lang), Tier::Primary));
            }
        }
        out
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = zero_model(4);
        for text in ["hello", "", "ሰላም world"] {
            let p = m.predict_topk(text, 4);
            assert_eq!(p.len(), 4);
            assert!(p.iter().all(|&(_, x)| (x - 0.25).abs() < 1e-12));
            // Ties resolve in label order.
            assert_eq!(p.iter().map(|x| x.0).collect::<Vec<_>>(), m.labels());
        }
    }

    #[test]
    fn zero_init_first_forward_is_uniform() {
        let recs = two_script_corpus(5, 1);
        let hyper = ClassifierHyper { dim: 4, epochs: 1, ..ClassifierHyper::default() };
        let prep = prepare(&recs, &hyper, &small_cfg(), Execution::Sequential).unwrap();
        let input = vec![0f64; prep.vocab.n_features() * 4];
        let output = vec![0f64; 2 * 4];
        let (fv, gold) = &prep.examples[0];
        let loss = xent_loss(&input, &output, 4, fv, *gold);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_label() {
        let recs: Vec<_> = two_script_corpus(5, 1).into_iter().take(5).collect();
        assert!(matches!(
            train(&recs, &ClassifierHyper::default(), &small_cfg()),
            Err(ClassifierError::TooFewLabels(1))
        ));
    }

    #[test]
    fn separable_corpus_is_learned() {
        let recs = two_script_corpus(200, 42);
        let held_out = two_script_corpus(50, 7);
        let hyper = ClassifierHyper { dim: 32, seed: 42, ..ClassifierHyper::default() };
        let (m, report) = train_with_report(&recs, &hyper, &small_cfg()).unwrap();
        let correct = held_out
            .iter()
            .filter(|r| m.predict_top1(&r.text).0 == r.lang)
            .count();
        assert_eq!(correct, held_out.len());
        assert_eq!(report.epoch_losses.len(), 2);
        assert!(report.epoch_losses[1] <= report.epoch_losses[0]);
    }

    #[test]
    fn skipped_records_are_counted() {
        let mut recs = two_script_corpus(20, 3);
        recs.push(SentenceRecord::new("", code("aaa"), Tier::Primary));
        let hyper = ClassifierHyper { dim: 8, ..ClassifierHyper::default() };
        let (_, report) = train_with_report(&recs, &hyper, &small_cfg()).unwrap();
        assert_eq!(report.skipped, 1);
        assert_eq!(report.examples, 40);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut a = vec![0.3f64, -1.2, 2.5, 0.0];
        let mut b: Vec<f64> = a.iter().map(|x| x + 17.25).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_invariant_under_positive_rescaling() {
        let recs = two_script_corpus(50, 11);
        let hyper = ClassifierHyper { dim: 16, seed: 3, ..ClassifierHyper::default() };
        let m = train(&recs, &hyper, &small_cfg()).unwrap();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        for r in recs.iter().take(30) {
            let h = m.hidden(&m.features(&r.text)).unwrap();
            for c in [0.01, 0.5, 3.0, 1e3] {
                let scaled: Vec<f64> = h.iter().map(|x| x * c).collect();
                assert_eq!(argmax(&m.scores(&h)), argmax(&m.scores(&scaled)));
            }
        }
    }

    #[test]
    fn top1_matches_dense_oracle() {
        let recs = two_script_corpus(60, 5);
        let hyper = ClassifierHyper { dim: 12, seed: 9, ..ClassifierHyper::default() };
        let m = train(&recs, &hyper, &small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pool: Vec<char> = "abcdeሀለሐመሠxyz".chars().collect();
        let dim = m.dim();
        for _ in 0..100 {
            let text: String = (0..rng.gen_range(1..20))
                .map(|_| if rng.gen_bool(0.2) { ' ' } else { pool[rng.gen_range(0..pool.len())] })
                .collect();
            let text = crate::corpus::normalize(&text);
            if text.is_empty() {
                continue;
            }
            // Dense oracle: expand the bag into a full count vector.
            let n_rows = m.vocab().n_features();
            let mut counts = vec![0f64; n_rows];
            let mut scratch = String::new();
            let mut ids = Vec::new();
            for w in text.split(' ') {
                features::push_word_features(w, m.vocab(), m.feature_config(), &mut ids, &mut scratch);
            }
            for id in &ids {
                counts[*id as usize] += 1.0;
            }
            let total: f64 = counts.iter().sum();
            let mut h = vec![0f64; dim];
            for (row, &c) in counts.iter().enumerate() {
                for k in 0..dim {
                    h[k] += c / total * f64::from(m.input_matrix()[row * dim + k]);
                }
            }
            let scores: Vec<f64> = (0..m.labels().len())
                .map(|l| (0..dim).map(|k| f64::from(m.output_matrix()[l * dim + k]) * h[k]).sum())
                .collect();
            let best = (0..scores.len())
                .fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
            let (label, _) = m.predict_top1(&text);
            assert_eq!(label, m.labels()[best], "{text}");
            let total_p: f64 = m.predict_proba(&text).iter().sum();
            assert!((total_p - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let recs = two_script_corpus(40, 2);
        let hyper = ClassifierHyper { dim: 8, seed: 42, ..ClassifierHyper::default() };
        let a = train(&recs, &hyper, &small_cfg()).unwrap();
        let b = train(&recs, &hyper, &small_cfg()).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_to(&mut ba).unwrap();
        b.write_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
    }

    #[test]
    fn save_load_round_trip_and_header_checks() {
        let recs = two_script_corpus(30, 4);
        let hyper = ClassifierHyper { dim: 8, seed: 1, ..ClassifierHyper::default() };
        let m = train(&recs, &hyper, &small_cfg()).unwrap();
        let mut bytes = Vec::new();
        m.write_to(&mut bytes).unwrap();
        let back = ClassifierModel::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            ClassifierModel::read_from(bad.as_slice()),
            Err(ClassifierError::Format(FormatError::BadMagic { .. }))
        ));
        let mut newer = bytes.clone();
        newer[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            ClassifierModel::read_from(newer.as_slice()),
            Err(ClassifierError::Format(FormatError::UnsupportedVersion(2)))
        ));
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            ClassifierModel::read_from(cut),
            Err(ClassifierError::Format(FormatError::TruncatedFile))
        ));
        let mut lidb = bytes.clone();
        lidb[..4].copy_from_slice(b"LIDE");
        assert!(ClassifierModel::read_from(lidb.as_slice()).is_err());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn hogwild_learns_separable_corpus() {
        let recs = two_script_corpus(200, 42);
        let hyper = ClassifierHyper { dim: 16, seed: 42, ..ClassifierHyper::default() };
        let (m, _) = train_hogwild(&recs, &hyper, &small_cfg(), 4).unwrap();
        let held_out = two_script_corpus(30, 8);
        let correct = held_out
            .iter()
            .filter(|r| m.predict_top1(&r.text).0 == r.lang)
            .count();
        assert!(correct as f64 >= 0.95 * held_out.len() as f64);
    }
}
