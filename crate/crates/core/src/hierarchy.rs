//! Confusion groups and confidence-gated routing.
//!
//! Groups come from the dev confusion matrix: every well-resourced language
//! that still scores below the F1 cutoff pulls in the labels it is most often
//! mistaken for, and overlapping groups are merged. At prediction time a
//! low-confidence top-1 label that belongs to a group is re-decided by the
//! nearest member centroid in embedding space.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierModel;
use crate::corpus::SentenceRecord;
use crate::embedder::{centroid, EmbedderError, SentenceEncoder};
use crate::eval::{EvalError, EvalReport, ResourceBucket};
use crate::features::hash64;
use crate::langmeta::LangCode;
use crate::par::Execution;
use crate::vecmath::dot;

pub const DEFAULT_F1_CUTOFF: f64 = 85.0;
pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_CENTROID_CAP: usize = 1000;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("report has no confusion matrix matching its labels")]
    MissingConfusionMatrix,
    #[error("no centroid for group member {0}")]
    MissingCentroid(LangCode),
    #[error("threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("label {0} is unknown to the base classifier")]
    UnknownLabel(LangCode),
    #[error("invalid group set: {0}")]
    InvalidGroups(String),
    #[error(transparent)]
    Embedder(#[from] EmbedderError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionGroup {
    pub id: LangCode,
    pub members: BTreeSet<LangCode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupSet {
    pub groups: Vec<ConfusionGroup>,
}

impl GroupSet {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group_of(&self, label: LangCode) -> Option<&ConfusionGroup> {
        self.groups.iter().find(|g| g.members.contains(&label))
    }

    pub fn members(&self) -> impl Iterator<Item = LangCode> + '_ {
        self.groups.iter().flat_map(|g| g.members.iter().copied())
    }

    /// Groups have at least two members and never overlap.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            if g.members.len() < 2 {
                return Err(HierarchyError::InvalidGroups(format!("group {} has < 2 members", g.id)));
            }
            if !g.members.contains(&g.id) {
                return Err(HierarchyError::InvalidGroups(format!("group {} lacks its id", g.id)));
            }
            for m in &g.members {
                if !seen.insert(*m) {
                    return Err(HierarchyError::InvalidGroups(format!("{m} is in two groups")));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("group set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HierarchyError> {
        let g: GroupSet =
            serde_json::from_str(s).map_err(|e| HierarchyError::InvalidGroups(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Seeds are high-resource labels with F1 below `f1_cutoff`. Each seed joins
/// its `top_k` most frequent wrong predictions; groups sharing a member are
/// merged, and a merged group is named after its smallest seed.
pub fn build_confusion_groups(
    report: &EvalReport,
    buckets: &BTreeMap<LangCode, ResourceBucket>,
    f1_cutoff: f64,
    top_k: usize,
) -> Result<GroupSet, HierarchyError> {
    let n = report.labels.len();
    if report.matrix.len() != n || report.matrix.iter().any(|r| r.len() != n) || report.per_label.len() != n {
        return Err(HierarchyError::MissingConfusionMatrix);
    }
    let seeds: Vec<usize> = (0..n)
        .filter(|&i| {
            buckets.get(&report.labels[i]) == Some(&ResourceBucket::High)
                && report.per_label[i].f1 < f1_cutoff
        })
        .collect();
    let mut uf = UnionFind((0..n).collect());
    let mut linked = vec![false; n];
    for &s in &seeds {
        let mut errors: Vec<(usize, u64)> = report.matrix[s]
            .iter()
            .enumerate()
            .filter(|&(j, &c)| j != s && c > 0)
            .map(|(j, &c)| (j, c))
            .collect();
        // Labels are sorted, so index order is lexicographic order.
        errors.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(j, _) in errors.iter().take(top_k) {
            uf.union(s, j);
            linked[s] = true;
            linked[j] = true;
        }
    }
    let mut comps: BTreeMap<usize, BTreeSet<LangCode>> = BTreeMap::new();
    for i in (0..n).filter(|&i| linked[i]) {
        let root = uf.find(i);
        comps.entry(root).or_default().insert(report.labels[i]);
    }
    let seed_set: BTreeSet<LangCode> = seeds.iter().map(|&i| report.labels[i]).collect();
    let mut groups: Vec<ConfusionGroup> = comps
        .into_values()
        .map(|members| {
            let id = *members
                .iter()
                .find(|m| seed_set.contains(m))
                .expect("every component holds a seed");
            ConfusionGroup { id, members }
        })
        .collect();
    groups.sort_by_key(|g| g.id);
    Ok(GroupSet { groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub threshold: f64,
    pub sweep: Vec<f64>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig { threshold: 0.95, sweep: vec![0.75, 0.80, 0.85, 0.90, 0.95] }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), HierarchyError> {
        for &t in std::iter::once(&self.threshold).chain(&self.sweep) {
            if !(t > 0.0 && t <= 1.0) {
                return Err(HierarchyError::InvalidThreshold(t));
            }
        }
        Ok(())
    }
}

/// Unit-norm centroid per group member.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Centroids {
    pub centroids: BTreeMap<LangCode, Vec<f32>>,
}

impl Centroids {
    /// Centroid of up to `cap` seeded-sampled training sentences per member.
    pub fn build<E: SentenceEncoder + Sync>(
        encoder: &E,
        groups: &GroupSet,
        train: &[SentenceRecord],
        cap: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<Self, HierarchyError> {
        let members: BTreeSet<LangCode> = groups.members().collect();
        let mut by_lang: BTreeMap<LangCode, Vec<&str>> = BTreeMap::new();
        for r in train.iter().filter(|r| members.contains(&r.lang)) {
            by_lang.entry(r.lang).or_default().push(&r.text);
        }
        let mut centroids = BTreeMap::new();
        for m in members {
            let mut texts = by_lang.remove(&m).unwrap_or_default();
            texts.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ hash64(m.as_str().as_bytes()));
            texts.shuffle(&mut rng);
            texts.truncate(cap);
            let embs: Vec<Vec<f32>> = exec
                .map(&texts, |t| encoder.encode(t))
                .into_iter()
                .flatten()
                .collect();
            if embs.is_empty() {
                return Err(HierarchyError::MissingCentroid(m));
            }
            centroids.insert(m, centroid(&embs)?);
        }
        Ok(Centroids { centroids })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutePath {
    Base,
    Routed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedPrediction {
    pub label: LangCode,
    pub base_label: LangCode,
    pub base_prob: f64,
    pub path: RoutePath,
    pub group_id: Option<LangCode>,
}

/// Nearest member centroid by cosine; ties go to the smaller code.
pub fn nearest_member(
    emb: &[f32],
    group: &ConfusionGroup,
    centroids: &Centroids,
) -> Result<LangCode, HierarchyError> {
    let mut best: Option<(LangCode, f32)> = None;
    for &m in &group.members {
        let c = centroids.centroids.get(&m).ok_or(HierarchyError::MissingCentroid(m))?;
        let s = dot(emb, c);
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((m, s));
        }
    }
    Ok(best.expect("groups are non-empty").0)
}

fn route_from_base<E: SentenceEncoder>(
    base: (LangCode, f64),
    text: &str,
    encoder: &E,
    groups: &GroupSet,
    centroids: &Centroids,
    threshold: f64,
) -> Result<RoutedPrediction, HierarchyError> {
    let (base_label, base_prob) = base;
    let keep = RoutedPrediction { label: base_label, base_label, base_prob, path: RoutePath::Base, group_id: None };
    if base_prob >= threshold {
        return Ok(keep);
    }
    let Some(group) = groups.group_of(base_label) else { return Ok(keep) };
    let Some(emb) = encoder.encode(text) else { return Ok(keep) };
    let label = nearest_member(&emb, group, centroids)?;
    Ok(RoutedPrediction { label, base_label, base_prob, path: RoutePath::Routed, group_id: Some(group.id) })
}

pub fn route_predict<E: SentenceEncoder>(
    base: &ClassifierModel,
    encoder: &E,
    groups: &GroupSet,
    centroids: &Centroids,
    text: &str,
    threshold: f64,
) -> Result<RoutedPrediction, HierarchyError> {
    route_from_base(base.predict_top1(text), text, encoder, groups, centroids, threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub group: LangCode,
    pub language: LangCode,
    pub baseline_f1: f64,
    /// Routed F1 per threshold, in sweep order.
    pub routed_f1: Vec<f64>,
}

impl SweepRow {
    pub fn deltas(&self) -> Vec<f64> {
        self.routed_f1.iter().map(|f| f - self.baseline_f1).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub thresholds: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub base_predictions: Vec<(LangCode, f64)>,
    /// Final labels per threshold, aligned with the eval set.
    pub routed_predictions: Vec<Vec<LangCode>>,
    pub base_report: EvalReport,
    pub routed_reports: Vec<EvalReport>,
}

impl SweepTable {
    /// Mean (baseline, routed per threshold) over all group-member rows.
    pub fn averages(&self) -> (f64, Vec<f64>) {
        let n = self.rows.len().max(1) as f64;
        let base = self.rows.iter().map(|r| r.baseline_f1).sum::<f64>() / n;
        let routed = (0..self.thresholds.len())
            .map(|k| self.rows.iter().map(|r| r.routed_f1[k]).sum::<f64>() / n)
            .collect();
        (base, routed)
    }

    pub fn average_deltas(&self) -> Vec<f64> {
        let (b, r) = self.averages();
        r.iter().map(|x| x - b).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("group,language,baseline_f1");
        for t in &self.thresholds {
            let pct = (t * 100.0).round() as u32;
            header.push_str(&format!(",f1_{pct},delta_{pct}"));
        }
        writeln!(w, "{header}")?;
        for r in &self.rows {
            let mut line = format!("{},{},{:.2}", r.group, r.language, r.baseline_f1);
            for (f, d) in r.routed_f1.iter().zip(r.deltas()) {
                line.push_str(&format!(",{f:.2},{d:+.2}"));
            }
            writeln!(w, "{line}")?;
        }
        let (b, routed) = self.averages();
        let mut line = format!("average,,{b:.2}");
        for f in routed {
            line.push_str(&format!(",{f:.2},{:+.2}", f - b));
        }
        writeln!(w, "{line}")
    }
}

/// Base predictions once, routing decisions per threshold, and per-member
/// F1 against the base classifier.
pub fn threshold_sweep<E: SentenceEncoder + Sync>(
    base: &ClassifierModel,
    encoder: &E,
    groups: &GroupSet,
    centroids: &Centroids,
    eval_set: &[SentenceRecord],
    sweep: &[f64],
    exec: Execution,
) -> Result<SweepTable, HierarchyError> {
    for r in eval_set {
        if base.label_index(r.lang).is_none() {
            return Err(HierarchyError::UnknownLabel(r.lang));
        }
    }
    for &t in sweep {
        if !(0.0..=1.0).contains(&t) {
            return Err(HierarchyError::InvalidThreshold(t));
        }
    }
    let golds: Vec<LangCode> = eval_set.iter().map(|r| r.lang).collect();
    let base_predictions: Vec<(LangCode, f64)> = exec.map(eval_set, |r| base.predict_top1(&r.text));
    // The routed label does not depend on the threshold, only whether it is used.
    let alternatives: Vec<Result<Option<LangCode>, HierarchyError>> =
        exec.map_indexed(eval_set, |i, r| {
            let Some(group) = groups.group_of(base_predictions[i].0) else { return Ok(None) };
            match encoder.encode(&r.text) {
                None => Ok(None),
                Some(e) => nearest_member(&e, group, centroids).map(Some),
            }
        });
    let alternatives = alternatives.into_iter().collect::<Result<Vec<_>, _>>()?;

    let base_labels: Vec<LangCode> = base_predictions.iter().map(|p| p.0).collect();
    let base_report = EvalReport::compute(&base_labels, &golds)?;
    let mut routed_predictions = Vec::new();
    let mut routed_reports = Vec::new();
    for &t in sweep {
        let labels: Vec<LangCode> = base_predictions
            .iter()
            .zip(&alternatives)
            .map(|(&(l, p), alt)| match alt {
                Some(a) if p < t => *a,
                _ => l,
            })
            .collect();
        routed_reports.push(EvalReport::compute(&labels, &golds)?);
        routed_predictions.push(labels);
    }
    let rows = groups
        .groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |&m| (g.id, m)))
        .map(|(group, language)| SweepRow {
            group,
            language,
            baseline_f1: base_report.f1(language).unwrap_or(0.0),
            routed_f1: routed_reports.iter().map(|r| r.f1(language).unwrap_or(0.0)).collect(),
        })
        .collect();
    Ok(SweepTable {
        thresholds: sweep.to_vec(),
        rows,
        base_predictions,
        routed_predictions,
        base_report,
        routed_reports,
    })
}
