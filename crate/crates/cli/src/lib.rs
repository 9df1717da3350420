//! `lidforge` command-line front end.
//!
//! Every subcommand maps onto core operations one to one and writes a
//! `RunManifest` next to its outputs. Exit codes: 0 success, 1 usage error,
//! 2 data or I/O error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lidforge_core::classifier::{self, ClassifierHyper, ClassifierModel, InputInit};
use lidforge_core::contamination;
use lidforge_core::corpus::{self, SentenceRecord, SplitSpec};
use lidforge_core::embedder::{self, EmbedderHyper, EmbeddingModel};
use lidforge_core::eval::{self, EvalReport};
use lidforge_core::features::{hash64, FeatureConfig};
use lidforge_core::hierarchy::{self, Centroids, GroupSet};
use lidforge_core::{Execution, LangCode, Registry};

#[derive(Parser, Debug)]
#[command(name = "lidforge", version, about = "Language identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Normalize, deduplicate and split JSONL corpora.
    Curate(CurateArgs),
    /// Audit evaluation sets for 4-gram containment in training data.
    Contam(ContamArgs),
    /// Train the n-gram classifier.
    Train(TrainArgs),
    /// Train the contrastive sentence embedder.
    EmbedTrain(EmbedTrainArgs),
    /// Build confusion groups (and centroids) from dev-set errors.
    Groups(GroupsArgs),
    /// Label sentences read from standard input, one per line.
    Predict(PredictArgs),
    /// Score a model on a labeled set.
    Eval(EvalArgs),
    /// Sweep routing thresholds over a labeled set.
    Sweep(SweepArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Curate(_) => "curate",
            Command::Contam(_) => "contam",
            Command::Train(_) => "train",
            Command::EmbedTrain(_) => "embed-train",
            Command::Groups(_) => "groups",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Curate(a) => Some(a.seed),
            Command::Train(a) => Some(a.seed),
            Command::EmbedTrain(a) => Some(a.seed),
            Command::Groups(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct CurateArgs {
    /// Input JSONL files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    train_cap: usize,
    #[arg(long, default_value_t = 100)]
    dev_cap: usize,
    #[arg(long, default_value_t = 100)]
    test_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra language metadata (TSV) on top of the bundled registry.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Accept languages missing from the registry.
    #[arg(long)]
    allow_unregistered: bool,
    /// External evaluation set to filter against training provenance.
    #[arg(long)]
    external: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ContamArgs {
    /// Evaluation sets, as `name=path` or a bare path (named by file stem).
    #[arg(required = true)]
    test_sets: Vec<String>,
    #[arg(long)]
    train: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
struct FeatureArgs {
    #[arg(long, default_value_t = 2)]
    minn: u32,
    #[arg(long, default_value_t = 5)]
    maxn: u32,
    #[arg(long, default_value_t = 1_000_000)]
    bucket: u32,
    #[arg(long, default_value_t = 1000)]
    min_count: u32,
}

impl FeatureArgs {
    fn config(&self) -> FeatureConfig {
        FeatureConfig {
            minn: self.minn,
            maxn: self.maxn,
            word_ngrams: 1,
            bucket: self.bucket,
            min_count: self.min_count,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value_t = 256)]
    dim: u32,
    #[arg(long, default_value_t = 2)]
    epoch: u32,
    #[arg(long, default_value_t = 0.8)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input-matrix initialization: `uniform` or `zero`.
    #[arg(long, default_value = "uniform", value_parser = parse_init)]
    init: InputInit,
    /// Dev split; merged into training unless `--no-merge-dev`.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    no_merge_dev: bool,
}

fn parse_init(s: &str) -> Result<InputInit, String> {
    match s {
        "uniform" => Ok(InputInit::Uniform),
        "zero" => Ok(InputInit::Zero),
        _ => Err(format!("unknown init `{s}` (expected uniform or zero)")),
    }
}

#[derive(Args, Debug, Serialize)]
struct EmbedTrainArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, default_value_t = 0.04)]
    tau: f64,
    #[arg(long, default_value_t = 5)]
    span_mask: u32,
    #[arg(long, default_value_t = 200)]
    batch_size: u32,
    #[arg(long, default_value_t = 50)]
    max_length: u32,
    #[arg(long, default_value_t = 1)]
    epoch: u32,
    #[arg(long, default_value_t = 0.05)]
    dropout: f64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    dim: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct GroupsArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Training split; sets resource buckets and feeds centroids.
    #[arg(long)]
    train: PathBuf,
    /// Embedder used to build member centroids.
    #[arg(long)]
    embedder: Option<PathBuf>,
    #[arg(long, default_value_t = hierarchy::DEFAULT_F1_CUTOFF)]
    f1_cutoff: f64,
    #[arg(long, default_value_t = hierarchy::DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = hierarchy::DEFAULT_CENTROID_CAP)]
    centroid_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct RoutingArgs {
    #[arg(long, requires_all = ["centroids", "embedder"])]
    groups: Option<PathBuf>,
    #[arg(long, requires = "groups")]
    centroids: Option<PathBuf>,
    #[arg(long, requires = "groups")]
    embedder: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[command(flatten)]
    routing: RoutingArgs,
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
    /// Labels per line (base classifier only).
    #[arg(short, default_value_t = 1)]
    k: usize,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Training split; enables resource-bucket and transfer reports.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(short, long)]
    model: PathBuf,
    #[arg(long)]
    embedder: PathBuf,
    #[arg(long)]
    groups: PathBuf,
    #[arg(long)]
    centroids: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.75, 0.80, 0.85, 0.90, 0.95])]
    thresholds: Vec<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    subcommand: &'static str,
    flags: &'a Command,
    inputs: BTreeMap<String, String>,
    seed: Option<u64>,
    started_unix_ms: u128,
    finished_unix_ms: u128,
}

struct Ctx<'a> {
    exec: Execution,
    inputs: BTreeMap<String, String>,
    stdin: &'a mut dyn BufRead,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs
            .insert(path.display().to_string(), format!("{:016x}", hash64(&bytes)));
        Ok(bytes)
    }

    fn records(&mut self, path: &Path) -> Result<Vec<SentenceRecord>> {
        let bytes = self.read(path)?;
        corpus::read_jsonl(bytes.as_slice()).with_context(|| format!("parsing {}", path.display()))
    }

    fn classifier(&mut self, path: &Path) -> Result<ClassifierModel> {
        let bytes = self.read(path)?;
        ClassifierModel::read_from(bytes.as_slice())
            .with_context(|| format!("loading classifier {}", path.display()))
    }

    fn embedder(&mut self, path: &Path) -> Result<EmbeddingModel> {
        let bytes = self.read(path)?;
        EmbeddingModel::read_from(bytes.as_slice())
            .with_context(|| format!("loading embedder {}", path.display()))
    }

    fn groups(&mut self, path: &Path) -> Result<GroupSet> {
        let bytes = self.read(path)?;
        GroupSet::from_json(std::str::from_utf8(&bytes)?)
            .with_context(|| format!("parsing groups {}", path.display()))
    }

    fn centroids(&mut self, path: &Path) -> Result<Centroids> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing centroids {}", path.display()))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_records(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    let mut w = create(path)?;
    corpus::write_jsonl(&mut w, records)?;
    w.flush()?;
    Ok(())
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn manifest_path(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("manifest.json")
    } else {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

/// Runs the tool with explicit I/O handles; returns the exit code.
pub fn run_with_io<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().ansi().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let mut ctx = Ctx {
        exec: Execution::default(),
        inputs: BTreeMap::new(),
        stdin,
        stdout,
        stderr,
    };
    let started = now_ms();
    apply_thread_cap();
    let result = dispatch(&cli.command, &mut ctx);
    match result {
        Ok(manifest_at) => {
            if let Some(path) = manifest_at {
                let manifest = RunManifest {
                    tool_version: env!("CARGO_PKG_VERSION"),
                    subcommand: cli.command.name(),
                    flags: &cli.command,
                    inputs: std::mem::take(&mut ctx.inputs),
                    seed: cli.command.seed(),
                    started_unix_ms: started,
                    finished_unix_ms: now_ms(),
                };
                if let Err(e) = write_json(&path, &manifest) {
                    let _ = writeln!(ctx.stderr, "error: {e:#}");
                    return 2;
                }
            }
            0
        }
        Err(e) => {
            let _ = writeln!(ctx.stderr, "error: {e:#}");
            2
        }
    }
}

/// Runs the tool against the process's standard streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let stdout = std::io::stdout();
    let mut stdout = BufWriter::new(stdout.lock());
    let mut stderr = std::io::stderr();
    let code = run_with_io(args, &mut stdin, &mut stdout, &mut stderr);
    let _ = stdout.flush();
    code
}

/// Caps the global rayon pool from `LIDFORGE_THREADS`. Only the first
/// call in a process takes effect.
#[cfg(feature = "parallel")]
fn apply_thread_cap() {
    let cap = std::env::var("LIDFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = cap {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn apply_thread_cap() {}

/// Returns where the run manifest belongs, if the command writes one.
fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Result<Option<PathBuf>> {
    match cmd {
        Command::Curate(a) => curate(a, ctx).map(|_| Some(manifest_path(&a.output, true))),
        Command::Contam(a) => contam(a, ctx).map(|_| Some(manifest_path(&a.output, true))),
        Command::Train(a) => train(a, ctx).map(|_| Some(manifest_path(&a.output, false))),
        Command::EmbedTrain(a) => embed_train(a, ctx).map(|_| Some(manifest_path(&a.output, false))),
        Command::Groups(a) => groups(a, ctx).map(|_| Some(manifest_path(&a.output, true))),
        Command::Predict(a) => predict(a, ctx).map(|_| None),
        Command::Eval(a) => evaluate(a, ctx).map(|_| Some(manifest_path(&a.output, true))),
        Command::Sweep(a) => sweep(a, ctx).map(|_| Some(manifest_path(&a.output, false))),
    }
}

fn curate(a: &CurateArgs, ctx: &mut Ctx) -> Result<()> {
    let mut registry = Registry::seed();
    if let Some(p) = &a.registry {
        let bytes = ctx.read(p)?;
        registry.load_tsv(bytes.as_slice()).with_context(|| format!("loading {}", p.display()))?;
    }
    let mut records = Vec::new();
    for p in &a.inputs {
        records.extend(ctx.records(p)?);
    }
    let records = corpus::dedup(corpus::normalize_records(records, ctx.exec));
    let spec = SplitSpec {
        train_cap: a.train_cap,
        dev_cap: a.dev_cap,
        test_cap: a.test_cap,
        seed: a.seed,
    };
    let reg = (!a.allow_unregistered).then_some(&registry);
    let splits = corpus::build_splits_with(&records, &spec, reg, ctx.exec)?;
    fs::create_dir_all(&a.output)?;
    write_records(&a.output.join("train.jsonl"), &splits.train)?;
    write_records(&a.output.join("dev.jsonl"), &splits.dev)?;
    write_records(&a.output.join("test.jsonl"), &splits.test)?;
    let provenance = splits.provenance();
    write_json(&a.output.join("provenance.json"), &provenance)?;
    if let Some(p) = &a.external {
        let external = corpus::normalize_records(ctx.records(p)?, ctx.exec);
        let kept = corpus::external_eval_filter(&external, &provenance);
        write_records(&a.output.join("external.jsonl"), &kept)?;
    }
    writeln!(
        ctx.stderr,
        "curated {} records: train {}, dev {}, test {}",
        records.len(),
        splits.train.len(),
        splits.dev.len(),
        splits.test.len()
    )?;
    Ok(())
}

fn contam(a: &ContamArgs, ctx: &mut Ctx) -> Result<()> {
    let train = ctx.records(&a.train)?;
    let mut sets = BTreeMap::new();
    for spec in &a.test_sets {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_owned(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| spec.clone());
                (stem, p)
            }
        };
        if sets.insert(name.clone(), ctx.records(&path)?).is_some() {
            bail!("evaluation set name `{name}` given twice");
        }
    }
    let reports = contamination::audit_with(&sets, &train, ctx.exec);
    fs::create_dir_all(&a.output)?;
    let mut w = create(&a.output.join("contamination.csv"))?;
    contamination::write_csv(&mut w, &reports)?;
    w.flush()?;
    write_json(&a.output.join("contamination.json"), &reports)?;
    Ok(())
}

fn train(a: &TrainArgs, ctx: &mut Ctx) -> Result<()> {
    let mut records = ctx.records(&a.input)?;
    if let Some(dev) = &a.dev {
        let dev = ctx.records(dev)?;
        if !a.no_merge_dev {
            records.extend(dev);
        }
    }
    let hyper = ClassifierHyper {
        dim: a.dim,
        epochs: a.epoch,
        lr0: a.lr,
        seed: a.seed,
        init: a.init,
    };
    let (model, report) = classifier::train_with_report(&records, &hyper, &a.features.config())?;
    let mut w = create(&a.output)?;
    model.write_to(&mut w)?;
    w.flush()?;
    writeln!(
        ctx.stderr,
        "trained on {} examples ({} skipped), labels {}, epoch losses {:?}",
        report.examples,
        report.skipped,
        model.labels().len(),
        report.epoch_losses
    )?;
    Ok(())
}

fn embed_train(a: &EmbedTrainArgs, ctx: &mut Ctx) -> Result<()> {
    let records = ctx.records(&a.input)?;
    let hyper = EmbedderHyper {
        tau: a.tau,
        span_mask_len: a.span_mask,
        batch_size: a.batch_size,
        max_length: a.max_length,
        epochs: a.epoch,
        feature_dropout: a.dropout,
        lr: a.lr,
        dim: a.dim,
        seed: a.seed,
    };
    let (model, report) =
        embedder::train_embedder_with_report(&records, &hyper, &a.features.config())?;
    let mut w = create(&a.output)?;
    model.write_to(&mut w)?;
    w.flush()?;
    let n = report.batch_losses.len();
    let head = report.batch_losses.iter().take(10).sum::<f64>() / n.clamp(1, 10) as f64;
    let tail = report.batch_losses.iter().rev().take(10).sum::<f64>() / n.clamp(1, 10) as f64;
    writeln!(ctx.stderr, "{n} batches, mean loss first {head:.4} last {tail:.4}")?;
    Ok(())
}

fn train_counts(train: &[SentenceRecord]) -> BTreeMap<LangCode, usize> {
    let mut counts = BTreeMap::new();
    for r in train {
        *counts.entry(r.lang).or_insert(0) += 1;
    }
    counts
}

fn predict_labels(model: &ClassifierModel, records: &[SentenceRecord], exec: Execution) -> Vec<LangCode> {
    exec.map(records, |r| model.predict_top1(&r.text).0)
}

fn groups(a: &GroupsArgs, ctx: &mut Ctx) -> Result<()> {
    let model = ctx.classifier(&a.model)?;
    let dev = ctx.records(&a.dev)?;
    let train = ctx.records(&a.train)?;
    let golds: Vec<LangCode> = dev.iter().map(|r| r.lang).collect();
    let preds = predict_labels(&model, &dev, ctx.exec);
    let report = EvalReport::compute(&preds, &golds)?;
    let buckets = eval::bucket(&train_counts(&train));
    let set = hierarchy::build_confusion_groups(&report, &buckets, a.f1_cutoff, a.top_k)?;
    fs::create_dir_all(&a.output)?;
    let mut w = create(&a.output.join("dev_report.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    fs::write(a.output.join("groups.json"), set.to_json() + "\n")?;
    if let Some(p) = &a.embedder {
        let emb = ctx.embedder(p)?;
        let cents = Centroids::build(&emb, &set, &train, a.centroid_cap, a.seed, ctx.exec)?;
        write_json(&a.output.join("centroids.json"), &cents)?;
    }
    writeln!(
        ctx.stderr,
        "{} groups over {} languages",
        set.groups.len(),
        set.members().count()
    )?;
    Ok(())
}

fn predict(a: &PredictArgs, ctx: &mut Ctx) -> Result<()> {
    if a.k == 0 {
        bail!("-k must be at least 1");
    }
    if !(0.0..=1.0).contains(&a.threshold) {
        bail!("threshold {} outside [0, 1]", a.threshold);
    }
    let model = ctx.classifier(&a.model)?;
    let routing = match (&a.routing.groups, &a.routing.centroids, &a.routing.embedder) {
        (Some(g), Some(c), Some(e)) => Some((ctx.groups(g)?, ctx.centroids(c)?, ctx.embedder(e)?)),
        _ => None,
    };
    let mut line = String::new();
    let mut lineno = 0usize;
    loop {
        line.clear();
        let n = ctx.stdin.read_line(&mut line).context("reading standard input")?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let text = corpus::normalize(line.trim_end_matches(['\n', '\r']));
        let out = match &routing {
            None => model
                .predict_topk(&text, a.k)
                .iter()
                .map(|(l, p)| format!("{l}\t{p:.6}"))
                .collect::<Vec<_>>()
                .join("\t"),
            Some((g, c, e)) => {
                let r = hierarchy::route_predict(&model, e, g, c, &text, a.threshold)
                    .with_context(|| format!("line {lineno}"))?;
                format!("{}\t{:.6}", r.label, r.base_prob)
            }
        };
        writeln!(ctx.stdout, "{out}")?;
    }
    ctx.stdout.flush()?;
    Ok(())
}

fn evaluate(a: &EvalArgs, ctx: &mut Ctx) -> Result<()> {
    let model = ctx.classifier(&a.model)?;
    let test = ctx.records(&a.test)?;
    let mut registry = Registry::seed();
    if let Some(p) = &a.registry {
        let bytes = ctx.read(p)?;
        registry.load_tsv(bytes.as_slice()).with_context(|| format!("loading {}", p.display()))?;
    }
    let golds: Vec<LangCode> = test.iter().map(|r| r.lang).collect();
    let preds = predict_labels(&model, &test, ctx.exec);
    let report = EvalReport::compute(&preds, &golds)?;
    fs::create_dir_all(&a.output)?;
    let out = |name: &str| a.output.join(name);

    let mut w = create(&out("report.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&out("report.json"), &report)?;

    let domains: Vec<Option<&str>> = test.iter().map(|r| Some(r.domain.as_str())).collect();
    let parts = eval::breakdown(&preds, &golds, &domains)?;
    let mut w = create(&out("by_domain.csv"))?;
    eval::write_breakdown_csv(&mut w, "domain", &parts)?;
    w.flush()?;

    let scripts: Vec<Option<String>> = test
        .iter()
        .map(|r| {
            r.script.map(|s| s.as_str().to_owned()).or_else(|| {
                let e = registry.get(r.lang)?;
                (e.scripts.len() == 1).then(|| e.scripts.iter().next().unwrap().as_str().to_owned())
            })
        })
        .collect();
    match eval::breakdown(&preds, &golds, &scripts) {
        Ok(parts) => {
            let mut w = create(&out("by_script.csv"))?;
            eval::write_breakdown_csv(&mut w, "script", &parts)?;
            w.flush()?;
        }
        Err(e) => writeln!(ctx.stderr, "skipping script breakdown: {e}")?,
    }

    if let Some(p) = &a.train {
        let train = ctx.records(p)?;
        let counts = train_counts(&train);
        let buckets = eval::bucket(&counts);
        let keys: Vec<Option<&str>> = golds
            .iter()
            .map(|l| Some(buckets.get(l).map_or("low", |b| b.as_str())))
            .collect();
        let parts = eval::breakdown(&preds, &golds, &keys)?;
        let mut w = create(&out("by_bucket.csv"))?;
        eval::write_breakdown_csv(&mut w, "bucket", &parts)?;
        w.flush()?;

        let known: BTreeMap<LangCode, usize> = counts
            .into_iter()
            .filter(|(l, _)| registry.contains(*l))
            .collect();
        let grouping = eval::transfer_grouping(&registry, &known)?;
        let f1: BTreeMap<LangCode, f64> =
            report.per_label.iter().map(|s| (s.label, s.f1)).collect();
        let mut w = create(&out("transfer.csv"))?;
        eval::write_transfer_csv(&mut w, &grouping.category_stats(&f1))?;
        w.flush()?;
        write_json(&out("transfer.json"), &grouping)?;
    }
    writeln!(ctx.stderr, "macro-F1 {:.2} on {} sentences", report.macro_f1, report.examples)?;
    Ok(())
}

fn sweep(a: &SweepArgs, ctx: &mut Ctx) -> Result<()> {
    let model = ctx.classifier(&a.model)?;
    let emb = ctx.embedder(&a.embedder)?;
    let groups = ctx.groups(&a.groups)?;
    let cents = ctx.centroids(&a.centroids)?;
    let test = ctx.records(&a.test)?;
    let table =
        hierarchy::threshold_sweep(&model, &emb, &groups, &cents, &test, &a.thresholds, ctx.exec)?;
    let mut w = create(&a.output)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}
