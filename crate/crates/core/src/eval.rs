//! Macro-F1, confusion matrices, keyed breakdowns and anchor-based transfer
//! grouping.
//!
//! All scores are percentages. Stored values are unrounded; writers round to
//! two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::langmeta::{LangCode, Registry, Relation};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("no breakdown key for example {0}")]
    MissingKey(usize),
    #[error("language {0} is not registered")]
    UnknownLanguage(LangCode),
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub label: LangCode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted union of gold and predicted labels.
    pub labels: Vec<LangCode>,
    /// `matrix[gold][pred]` counts, indexed like `labels`.
    pub matrix: Vec<Vec<u64>>,
    pub per_label: Vec<LabelStats>,
    pub macro_f1: f64,
    pub examples: usize,
}

impl EvalReport {
    pub fn compute(preds: &[LangCode], golds: &[LangCode]) -> Result<Self, EvalError> {
        if preds.len() != golds.len() {
            return Err(EvalError::LengthMismatch { preds: preds.len(), golds: golds.len() });
        }
        if golds.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let labels: Vec<LangCode> = golds
            .iter()
            .chain(preds)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = |l: &LangCode| labels.binary_search(l).expect("label in universe");
        let n = labels.len();
        let mut matrix = vec![vec![0u64; n]; n];
        for (p, g) in preds.iter().zip(golds) {
            matrix[index(g)][index(p)] += 1;
        }
        let per_label: Vec<LabelStats> = (0..n)
            .map(|i| {
                let tp = matrix[i][i] as f64;
                let row: u64 = matrix[i].iter().sum();
                let col: u64 = matrix.iter().map(|r| r[i]).sum();
                let p = if col == 0 { 0.0 } else { tp / col as f64 };
                let r = if row == 0 { 0.0 } else { tp / row as f64 };
                let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
                LabelStats {
                    label: labels[i],
                    precision: 100.0 * p,
                    recall: 100.0 * r,
                    f1: 100.0 * f1,
                    support: row,
                }
            })
            .collect();
        let macro_f1 = per_label.iter().map(|s| s.f1).sum::<f64>() / n as f64;
        Ok(EvalReport { labels, matrix, per_label, macro_f1, examples: golds.len() })
    }

    pub fn index_of(&self, label: LangCode) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn stats(&self, label: LangCode) -> Option<&LabelStats> {
        self.index_of(label).map(|i| &self.per_label[i])
    }

    pub fn f1(&self, label: LangCode) -> Option<f64> {
        self.stats(label).map(|s| s.f1)
    }

    /// Off-diagonal entries of a gold row, as `(predicted, count)`.
    pub fn row_errors(&self, gold: LangCode) -> Vec<(LangCode, u64)> {
        let Some(i) = self.index_of(gold) else { return Vec::new() };
        self.matrix[i]
            .iter()
            .enumerate()
            .filter(|&(j, &c)| j != i && c > 0)
            .map(|(j, &c)| (self.labels[j], c))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "label,precision,recall,f1,support")?;
        for s in &self.per_label {
            writeln!(
                w,
                "{},{:.2},{:.2},{:.2},{}",
                s.label, s.precision, s.recall, s.f1, s.support
            )?;
        }
        writeln!(w, "macro,,,{:.2},{}", self.macro_f1, self.examples)
    }

    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }
}

/// Unrounded macro-F1 percentage over the union of gold and predicted labels.
pub fn macro_f1(preds: &[LangCode], golds: &[LangCode]) -> Result<f64, EvalError> {
    EvalReport::compute(preds, golds).map(|r| r.macro_f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceBucket {
    Low,
    Medium,
    High,
}

impl ResourceBucket {
    pub const LOW_BELOW: usize = 98;
    pub const HIGH_ABOVE: usize = 980;

    pub fn of(train_count: usize) -> Self {
        if train_count < Self::LOW_BELOW {
            ResourceBucket::Low
        } else if train_count <= Self::HIGH_ABOVE {
            ResourceBucket::Medium
        } else {
            ResourceBucket::High
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceBucket::Low => "low",
            ResourceBucket::Medium => "medium",
            ResourceBucket::High => "high",
        }
    }
}

impl std::fmt::Display for ResourceBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn bucket(train_counts: &BTreeMap<LangCode, usize>) -> BTreeMap<LangCode, ResourceBucket> {
    train_counts
        .iter()
        .map(|(&l, &c)| (l, ResourceBucket::of(c)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<K> {
    pub key: K,
    pub examples: usize,
    pub report: EvalReport,
}

/// Splits the evaluation pairs by key and reports each part separately.
pub fn breakdown<K: Ord + Clone>(
    preds: &[LangCode],
    golds: &[LangCode],
    keys: &[Option<K>],
) -> Result<Vec<Partition<K>>, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    if keys.len() < golds.len() {
        return Err(EvalError::MissingKey(keys.len()));
    }
    let mut parts: BTreeMap<K, (Vec<LangCode>, Vec<LangCode>)> = BTreeMap::new();
    for (i, (p, g)) in preds.iter().zip(golds).enumerate() {
        let k = keys[i].clone().ok_or(EvalError::MissingKey(i))?;
        let e = parts.entry(k).or_default();
        e.0.push(*p);
        e.1.push(*g);
    }
    parts
        .into_iter()
        .map(|(key, (p, g))| {
            Ok(Partition { key, examples: g.len(), report: EvalReport::compute(&p, &g)? })
        })
        .collect()
}

pub fn write_breakdown_csv<W: Write, K: std::fmt::Display>(
    mut w: W,
    key_name: &str,
    parts: &[Partition<K>],
) -> std::io::Result<()> {
    writeln!(w, "{key_name},examples,macro_f1")?;
    for p in parts {
        writeln!(w, "{},{},{:.2}", p.key, p.examples, p.report.macro_f1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipient {
    pub lang: LangCode,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPanel {
    pub family: String,
    pub anchor: LangCode,
    /// Every other trained language, related to this family's anchor.
    pub recipients: Vec<Recipient>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransferGrouping {
    pub panels: Vec<FamilyPanel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(BoxStats {
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// One anchor per top-level family (largest training count, ties to the
/// smaller code); each panel relates every other trained language to it.
pub fn transfer_grouping(
    registry: &Registry,
    train_counts: &BTreeMap<LangCode, usize>,
) -> Result<TransferGrouping, EvalError> {
    let mut anchors: BTreeMap<String, (LangCode, usize)> = BTreeMap::new();
    for (&lang, &count) in train_counts {
        let entry = registry.get(lang).ok_or(EvalError::UnknownLanguage(lang))?;
        if count == 0 {
            continue;
        }
        let slot = anchors.entry(entry.family.top().to_owned()).or_insert((lang, count));
        // Iteration is in code order, so strict > keeps the smaller code on ties.
        if count > slot.1 {
            *slot = (lang, count);
        }
    }
    let trained: Vec<LangCode> = train_counts
        .iter()
        .filter(|&(_, &c)| c > 0)
        .map(|(&l, _)| l)
        .collect();
    let panels = anchors
        .into_iter()
        .map(|(family, (anchor, _))| {
            let recipients = trained
                .iter()
                .filter(|&&l| l != anchor)
                .map(|&l| {
                    let relation = registry
                        .relation(anchor, l)
                        .map_err(|_| EvalError::UnknownLanguage(l))?;
                    Ok(Recipient { lang: l, relation })
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            Ok(FamilyPanel { family, anchor, recipients })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(TransferGrouping { panels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub family: String,
    pub anchor: LangCode,
    pub relation: Relation,
    pub stats: BoxStats,
}

impl TransferGrouping {
    pub fn anchor_of(&self, family: &str) -> Option<LangCode> {
        self.panels.iter().find(|p| p.family == family).map(|p| p.anchor)
    }

    /// F1 distribution per (family panel, relation); languages without an
    /// F1 score are left out and empty categories are omitted.
    pub fn category_stats(&self, f1: &BTreeMap<LangCode, f64>) -> Vec<CategoryStats> {
        let mut out = Vec::new();
        for p in &self.panels {
            for rel in Relation::ALL {
                let vals: Vec<f64> = p
                    .recipients
                    .iter()
                    .filter(|r| r.relation == rel)
                    .filter_map(|r| f1.get(&r.lang).copied())
                    .collect();
                if let Some(stats) = BoxStats::of(&vals) {
                    out.push(CategoryStats {
                        family: p.family.clone(),
                        anchor: p.anchor,
                        relation: rel,
                        stats,
                    });
                }
            }
        }
        out
    }
}

pub fn write_transfer_csv<W: Write>(mut w: W, rows: &[CategoryStats]) -> std::io::Result<()> {
    writeln!(w, "family,anchor,relation,languages,min,q1,median,q3,max")?;
    for r in rows {
        let s = &r.stats;
        writeln!(
            w,
            "{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2}",
            r.family,
            r.anchor,
            r.relation.as_str(),
            s.n,
            s.min,
            s.q1,
            s.median,
            s.q3,
            s.max
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langmeta::{FamilyPath, ScriptCode};
    use proptest::prelude::*;

    fn c(s: &str) -> LangCode {
        LangCode::new(s).unwrap()
    }

    fn codes(xs: &[&str]) -> Vec<LangCode> {
        xs.iter().map(|s| c(s)).collect()
    }

    // Per-label F1 from raw counts, without the confusion matrix.
    fn oracle_macro(preds: &[LangCode], golds: &[LangCode]) -> f64 {
        let universe: BTreeSet<LangCode> = preds.iter().chain(golds).copied().collect();
        let mut total = 0.0;
        for l in &universe {
            let tp = preds.iter().zip(golds).filter(|(p, g)| *p == l && *g == l).count() as f64;
            let fp = preds.iter().zip(golds).filter(|(p, g)| *p == l && *g != l).count() as f64;
            let fn_ = preds.iter().zip(golds).filter(|(p, g)| *p != l && *g == l).count() as f64;
            if tp > 0.0 {
                total += 2.0 * tp / (2.0 * tp + fp + fn_);
            }
        }
        100.0 * total / universe.len() as f64
    }

    #[test]
    fn hand_computed_examples() {
        let g = codes(&["aaa", "aaa", "bbb", "bbb"]);
        let p = codes(&["aaa", "bbb", "bbb", "bbb"]);
        let r = EvalReport::compute(&p, &g).unwrap();
        assert_eq!(round2(r.f1(c("aaa")).unwrap()), 66.67);
        assert_eq!(round2(r.f1(c("bbb")).unwrap()), 80.00);
        assert_eq!(round2(r.macro_f1), 73.33);

        assert_eq!(macro_f1(&g, &g).unwrap(), 100.0);
        assert_eq!(macro_f1(&codes(&["bbb", "bbb"]), &codes(&["aaa", "aaa"])).unwrap(), 0.0);
        assert_eq!(
            macro_f1(&codes(&["aaa"]), &[]),
            Err(EvalError::LengthMismatch { preds: 1, golds: 0 })
        );
        assert_eq!(macro_f1(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn report_csv_shape() {
        let g = codes(&["aaa", "aaa", "bbb", "bbb"]);
        let p = codes(&["aaa", "bbb", "bbb", "bbb"]);
        let mut out = Vec::new();
        EvalReport::compute(&p, &g).unwrap().write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "label,precision,recall,f1,support\n\
             aaa,100.00,50.00,66.67,2\n\
             bbb,66.67,100.00,80.00,2\n\
             macro,,,73.33,4\n"
        );
    }

    #[test]
    fn bucket_boundaries() {
        assert_eq!(ResourceBucket::of(50), ResourceBucket::Low);
        assert_eq!(ResourceBucket::of(500), ResourceBucket::Medium);
        assert_eq!(ResourceBucket::of(5000), ResourceBucket::High);
        assert_eq!(ResourceBucket::of(97), ResourceBucket::Low);
        assert_eq!(ResourceBucket::of(98), ResourceBucket::Medium);
        assert_eq!(ResourceBucket::of(980), ResourceBucket::Medium);
        assert_eq!(ResourceBucket::of(981), ResourceBucket::High);
    }

    #[test]
    fn breakdown_examples() {
        let g = codes(&["aaa", "bbb", "aaa", "bbb"]);
        let p = codes(&["aaa", "aaa", "aaa", "bbb"]);
        let one = breakdown(&p, &g, &[Some(1); 4]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].report, EvalReport::compute(&p, &g).unwrap());

        let g = codes(&["aaa", "bbb", "ccc", "ddd"]);
        let parts = breakdown(&g, &g, &[Some("x"), Some("x"), Some("y"), Some("y")]).unwrap();
        assert!(parts.iter().all(|p| p.report.macro_f1 == 100.0));
        assert_eq!(
            breakdown(&g, &g, &[Some(0), None, Some(0), Some(0)]),
            Err(EvalError::MissingKey(1))
        );
    }

    fn registry() -> Registry {
        let mut r = Registry::new();
        let fam = |s: &str| FamilyPath::parse(s).unwrap();
        r.register("aaa", [ScriptCode::Latn], fam("Niger-Congo")).unwrap();
        r.register("bbb", [ScriptCode::Latn], fam("Niger-Congo")).unwrap();
        r.register("ccc", [ScriptCode::Ethi], fam("Niger-Congo")).unwrap();
        r.register("ddd", [ScriptCode::Latn], fam("Afro-Asiatic")).unwrap();
        r.register("eee", [ScriptCode::Arab], fam("Afro-Asiatic")).unwrap();
        r
    }

    #[test]
    fn transfer_anchor_rules() {
        let reg = registry();
        let counts: BTreeMap<_, _> = [(c("aaa"), 10), (c("bbb"), 5)].into_iter().collect();
        let t = transfer_grouping(&reg, &counts).unwrap();
        assert_eq!(t.panels.len(), 1);
        assert_eq!(t.panels[0].anchor, c("aaa"));
        assert_eq!(t.panels[0].recipients, vec![Recipient {
            lang: c("bbb"),
            relation: Relation::SameFamilySameScript
        }]);

        let tie: BTreeMap<_, _> = [(c("aaa"), 10), (c("bbb"), 10)].into_iter().collect();
        assert_eq!(transfer_grouping(&reg, &tie).unwrap().panels[0].anchor, c("aaa"));

        let all: BTreeMap<_, _> =
            [(c("aaa"), 10), (c("bbb"), 5), (c("ccc"), 3), (c("ddd"), 7), (c("eee"), 1)]
                .into_iter()
                .collect();
        let t = transfer_grouping(&reg, &all).unwrap();
        assert_eq!(t.anchor_of("Niger-Congo"), Some(c("aaa")));
        assert_eq!(t.anchor_of("Afro-Asiatic"), Some(c("ddd")));
        let nc = &t.panels.iter().find(|p| p.family == "Niger-Congo").unwrap().recipients;
        let rel = |l: &str| nc.iter().find(|r| r.lang == c(l)).unwrap().relation;
        assert_eq!(rel("ccc"), Relation::SameFamilyDiffScript);
        assert_eq!(rel("ddd"), Relation::DiffFamilySameScript);
        assert_eq!(rel("eee"), Relation::DiffFamilyDiffScript);
        assert!(nc.iter().all(|r| r.lang != c("aaa")));

        let unknown: BTreeMap<_, _> = [(c("zzz"), 1)].into_iter().collect();
        assert_eq!(
            transfer_grouping(&reg, &unknown),
            Err(EvalError::UnknownLanguage(c("zzz")))
        );
    }

    #[test]
    fn box_stats_interpolate() {
        let s = BoxStats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        let one = BoxStats::of(&[7.0]).unwrap();
        assert_eq!((one.q1, one.median), (7.0, 7.0));
        assert!(BoxStats::of(&[]).is_none());
    }

    fn pairs() -> impl Strategy<Value = (Vec<LangCode>, Vec<LangCode>)> {
        let label = prop::sample::select(codes(&["aaa", "bbb", "ccc", "ddd"]));
        prop::collection::vec((label.clone(), label), 1..60).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn matches_count_oracle((p, g) in pairs()) {
            let ours = macro_f1(&p, &g).unwrap();
            prop_assert!((ours - oracle_macro(&p, &g)).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&ours));
        }

        #[test]
        fn permutation_invariant((p, g) in pairs(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p2: Vec<_> = idx.iter().map(|&i| p[i]).collect();
            let g2: Vec<_> = idx.iter().map(|&i| g[i]).collect();
            prop_assert_eq!(macro_f1(&p, &g).unwrap(), macro_f1(&p2, &g2).unwrap());
        }

        #[test]
        fn perfect_iff_no_off_diagonal((p, g) in pairs()) {
            let perfect = p == g;
            prop_assert_eq!(macro_f1(&p, &g).unwrap() == 100.0, perfect);
        }

        #[test]
        fn partitions_sum_to_global((p, g) in pairs(), keys in prop::collection::vec(0u8..3, 60)) {
            let keys: Vec<Option<u8>> = keys.into_iter().take(p.len()).map(Some).collect();
            let global = EvalReport::compute(&p, &g).unwrap();
            let parts = breakdown(&p, &g, &keys).unwrap();
            let mut sum = vec![vec![0u64; global.labels.len()]; global.labels.len()];
            for part in &parts {
                let r = &part.report;
                for (i, gi) in r.labels.iter().enumerate() {
                    for (j, pj) in r.labels.iter().enumerate() {
                        sum[global.index_of(*gi).unwrap()][global.index_of(*pj).unwrap()] += r.matrix[i][j];
                    }
                }
                // Subset recompute oracle.
                let (sp, sg): (Vec<_>, Vec<_>) = (0..p.len())
                    .filter(|&i| keys[i] == Some(part.key))
                    .map(|i| (p[i], g[i]))
                    .unzip();
                prop_assert!((r.macro_f1 - oracle_macro(&sp, &sg)).abs() < 1e-9);
            }
            prop_assert_eq!(sum, global.matrix);
        }
    }
}
