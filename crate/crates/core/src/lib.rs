//! # lidforge-core
//!
//! Language identification for large multilingual corpora.
//!
//! The pipeline, bottom up:
//!
//! - [`langmeta`]: ISO 639-3 registry with scripts and family paths.
//! - [`corpus`]: normalization, deduplication, domain attribution, capped splits.
//! - [`contamination`]: word 4-gram containment audits of eval sets against train.
//! - [`features`]: hashed character n-gram features (FNV-1a buckets).
//! - [`classifier`]: bag-of-features softmax classifier trained with SGD.
//! - [`embedder`]: self-contrastive (InfoNCE) sentence encoder over the same features.
//! - [`eval`]: macro-F1, confusion matrices, breakdowns, transfer grouping.
//! - [`hierarchy`]: confusion groups and confidence-gated centroid routing.
//!
//! Batch-shaped work (normalization, extraction, prediction, audits) runs on
//! rayon when the `parallel` feature is enabled; every parallel path has a
//! sequential twin selected through [`Execution`] and produces identical output.

pub mod classifier;
pub mod container;
pub mod contamination;
pub mod corpus;
pub mod embedder;
pub mod eval;
pub mod features;
pub mod hierarchy;
pub mod langmeta;
mod par;
pub mod synth;
mod vecmath;

pub use par::Execution;

pub use classifier::{ClassifierHyper, ClassifierModel};
pub use contamination::{ContainmentIndex, ContaminationReport};
pub use corpus::{Domain, SentenceRecord, SplitSpec, Splits, Tier};
pub use embedder::{EmbedderHyper, EmbeddingModel};
pub use eval::{EvalReport, ResourceBucket};
pub use features::{FeatureConfig, FeatureVector, Vocab};
pub use hierarchy::{ConfusionGroup, GroupSet, RoutedPrediction, RouterConfig};
pub use langmeta::{FamilyPath, LangCode, LanguageEntry, Registry, Relation, ScriptCode};
