//! Sequential and parallel schedules must agree exactly.

use std::collections::BTreeMap;

use lidforge_core::classifier::{self, ClassifierHyper};
use lidforge_core::contamination;
use lidforge_core::corpus::{self, SplitSpec};
use lidforge_core::features::{self, FeatureConfig};
use lidforge_core::hierarchy::{self, Centroids, ConfusionGroup, GroupSet};
use lidforge_core::synth::{self, OracleEncoder};
use lidforge_core::Execution::{Parallel, Sequential};

fn cfg() -> FeatureConfig {
    FeatureConfig { bucket: 20_000, min_count: 1, ..FeatureConfig::default() }
}

#[test]
fn batch_operations_match() {
    let c = synth::markov_corpus(4, (200, 20, 50), 11);
    let texts: Vec<&str> = c.test.iter().map(|r| r.text.as_str()).collect();
    let vocab = features::build_vocab_from_records(&c.train, &cfg()).unwrap();
    assert_eq!(
        features::extract_batch(&texts, &vocab, &cfg(), Sequential),
        features::extract_batch(&texts, &vocab, &cfg(), Parallel)
    );

    let hyper = ClassifierHyper { dim: 16, seed: 3, ..ClassifierHyper::default() };
    let model = classifier::train(&c.train, &hyper, &cfg()).unwrap();
    assert_eq!(model.predict_batch(&texts, 3, Sequential), model.predict_batch(&texts, 3, Parallel));

    let mut sets = BTreeMap::new();
    sets.insert("dev".to_string(), c.dev.clone());
    sets.insert("train".to_string(), c.train[..40].to_vec());
    assert_eq!(
        contamination::audit_with(&sets, &c.train, Sequential),
        contamination::audit_with(&sets, &c.train, Parallel)
    );

    let all: Vec<_> = c.train.iter().chain(&c.dev).cloned().collect();
    assert_eq!(
        corpus::normalize_records(all.clone(), Sequential),
        corpus::normalize_records(all.clone(), Parallel)
    );
    let spec = SplitSpec { train_cap: 100, dev_cap: 10, test_cap: 10, seed: 9 };
    assert_eq!(
        corpus::build_splits_with(&all, &spec, None, Sequential).unwrap(),
        corpus::build_splits_with(&all, &spec, None, Parallel).unwrap()
    );
}

#[test]
fn routing_matches() {
    let c = synth::confusable_corpus(2, 0.8, (200, 0, 50), 4);
    let hyper = ClassifierHyper { dim: 16, seed: 3, ..ClassifierHyper::default() };
    let model = classifier::train(&c.train, &hyper, &cfg()).unwrap();
    let pair = [synth::synthetic_code(0), synth::synthetic_code(1)];
    let groups = GroupSet {
        groups: vec![ConfusionGroup { id: pair[0], members: pair.into_iter().collect() }],
    };
    let oracle = OracleEncoder::new(c.train.iter().chain(&c.test));
    let seq = Centroids::build(&oracle, &groups, &c.train, 50, 1, Sequential).unwrap();
    let par = Centroids::build(&oracle, &groups, &c.train, 50, 1, Parallel).unwrap();
    assert_eq!(seq, par);
    let thresholds = [0.5, 0.95];
    let a = hierarchy::threshold_sweep(&model, &oracle, &groups, &seq, &c.test, &thresholds, Sequential).unwrap();
    let b = hierarchy::threshold_sweep(&model, &oracle, &groups, &seq, &c.test, &thresholds, Parallel).unwrap();
    assert_eq!(a.routed_predictions, b.routed_predictions);
    assert_eq!(a.rows, b.rows);
}
