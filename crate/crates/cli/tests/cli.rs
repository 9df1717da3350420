use std::path::Path;

use lidforge_core::corpus;
use lidforge_core::synth;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn lidforge(args: &[&str], stdin: &str) -> Run {
    let mut input = stdin.as_bytes();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("lidforge").chain(args.iter().copied());
    let code = lidforge_cli::run_with_io(argv, &mut input, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn ok(args: &[&str]) -> Run {
    let r = lidforge(args, "");
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    r
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

const SMALL: [&str; 6] = ["--bucket", "20000", "--min-count", "1", "--dim", "32"];

#[test]
fn exit_codes() {
    assert_eq!(lidforge(&["--help"], "").code, 0);
    assert_eq!(lidforge(&["--version"], "").code, 0);
    assert_eq!(lidforge(&[], "").code, 1);
    assert_eq!(lidforge(&["train", "--no-such-flag"], "").code, 1);
    assert_eq!(lidforge(&["train", "x.jsonl", "-o", "m.bin", "--init", "gaussian"], "").code, 1);
    let dir = tempfile::tempdir().unwrap();
    let r = lidforge(&["train", &path(dir.path(), "missing.jsonl"), "-o", &path(dir.path(), "m.bin")], "");
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("missing.jsonl"), "{}", r.stderr);
    std::fs::write(dir.path().join("bad.jsonl"), "{not json\n").unwrap();
    let r = lidforge(&["train", &path(dir.path(), "bad.jsonl"), "-o", &path(dir.path(), "m.bin")], "");
    assert_eq!(r.code, 2);
}

#[test]
fn unregistered_languages_need_a_flag() {
    let dir = tempfile::tempdir().unwrap();
    let c = synth::markov_corpus(2, (20, 0, 0), 1);
    let mut raw = Vec::new();
    corpus::write_jsonl(&mut raw, &c.train).unwrap();
    std::fs::write(dir.path().join("in.jsonl"), raw).unwrap();
    let r = lidforge(&["curate", &path(dir.path(), "in.jsonl"), "-o", &path(dir.path(), "out")], "");
    assert_eq!(r.code, 2);
    ok(&["curate", "--allow-unregistered", &path(dir.path(), "in.jsonl"), "-o", &path(dir.path(), "out")]);
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let c = synth::confusable_corpus(3, 0.8, (400, 40, 40), 3);
    let mut raw = Vec::new();
    let all: Vec<_> = c.train.iter().chain(&c.dev).chain(&c.test).cloned().collect();
    corpus::write_jsonl(&mut raw, &all).unwrap();
    std::fs::write(d.join("in.jsonl"), raw).unwrap();

    ok(&["curate", "--allow-unregistered", "--dev-cap", "40", "--test-cap", "40", "--seed", "5", &path(d, "in.jsonl"), "-o", &path(d, "splits")]);
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "provenance.json", "manifest.json"] {
        assert!(d.join("splits").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("splits/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "curate");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["inputs"].as_object().unwrap().len(), 1);

    let (train, dev, test) = (path(d, "splits/train.jsonl"), path(d, "splits/dev.jsonl"), path(d, "splits/test.jsonl"));
    let model = path(d, "model.bin");
    let mut args = vec!["train", train.as_str(), "-o", model.as_str(), "--dev", dev.as_str(), "--no-merge-dev"];
    args.extend(SMALL);
    ok(&args);
    assert!(d.join("model.bin.manifest.json").exists());

    let emb = path(d, "emb.bin");
    let mut args = vec!["embed-train", train.as_str(), "-o", emb.as_str(), "--batch-size", "64"];
    args.extend(SMALL);
    ok(&args);

    let groups_dir = path(d, "groups");
    ok(&["groups", "-m", &model, "--dev", &dev, "--train", &train, "--embedder", &emb, "-o", &groups_dir, "--f1-cutoff", "101"]);
    let groups = path(d, "groups/groups.json");
    let cents = path(d, "groups/centroids.json");
    let gs: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&groups).unwrap()).unwrap();
    assert!(gs["groups"].is_array());

    // Base-only predict agrees with the library.
    let lines: Vec<&str> = c.test.iter().take(10).map(|r| r.text.as_str()).collect();
    let stdin = lines.join("\n") + "\n";
    let base = lidforge(&["predict", "-m", &model], &stdin);
    assert_eq!(base.code, 0, "{}", base.stderr);
    let lib = lidforge_core::ClassifierModel::load(&model).unwrap();
    for (line, text) in base.stdout.lines().zip(&lines) {
        let (l, p) = lib.predict_top1(text);
        assert_eq!(line, format!("{l}\t{p:.6}"));
    }
    assert_eq!(base.stdout.lines().count(), 10);
    let top3 = lidforge(&["predict", "-m", &model, "-k", "3"], &stdin);
    assert!(top3.stdout.lines().all(|l| l.split('\t').count() == 6));

    // Threshold 0 never routes.
    let never = lidforge(&["predict", "-m", &model, "--groups", &groups, "--centroids", &cents, "--embedder", &emb, "--threshold", "0"], &stdin);
    assert_eq!(never.code, 0, "{}", never.stderr);
    assert_eq!(never.stdout, base.stdout);
    let routed = lidforge(&["predict", "-m", &model, "--groups", &groups, "--centroids", &cents, "--embedder", &emb], &stdin);
    assert_eq!(routed.code, 0, "{}", routed.stderr);
    assert_eq!(lidforge(&["predict", "-m", &model, "--groups", &groups], &stdin).code, 1);

    let eval_dir = path(d, "eval");
    ok(&["eval", "-m", &model, "--test", &test, "--train", &train, "-o", &eval_dir]);
    let report = std::fs::read_to_string(d.join("eval/report.csv")).unwrap();
    assert!(report.starts_with("label,precision,recall,f1,support\n"));
    assert!(report.lines().last().unwrap().starts_with("macro,,,"));
    assert!(d.join("eval/by_bucket.csv").exists());
    assert!(d.join("eval/by_domain.csv").exists());

    let sweep = path(d, "sweep.csv");
    ok(&["sweep", "-m", &model, "--embedder", &emb, "--groups", &groups, "--centroids", &cents, "--test", &test, "-o", &sweep]);
    let table = std::fs::read_to_string(&sweep).unwrap();
    assert!(table.starts_with("group,language,baseline_f1,f1_75,delta_75,"));
    assert!(table.lines().last().unwrap().starts_with("average,,"));

    let contam_dir = path(d, "contam");
    let named = format!("heldout={test}");
    ok(&["contam", &named, &train, "--train", &train, "-o", &contam_dir]);
    let csv = std::fs::read_to_string(d.join("contam/contamination.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next().unwrap(), "dataset,sentences,contam_pct,languages,bucket_0_10,bucket_ge_10");
    let held = rows.next().unwrap();
    assert!(held.starts_with("heldout,"), "{held}");
    let own = rows.next().unwrap();
    assert!(own.starts_with("train,") && own.split(',').nth(2) == Some("100.00"), "{own}");
}
