//! Command-line front end. Every subcommand reads and writes the documented
//! JSONL/JSON/CSV files and records a [`RunManifest`] next to its output, so
//! `aose replay <manifest>` can rerun it.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classifier_trainer::{train, Checkpoint, TrainConfig, TrainMode};
use crate::cost_model::{costs, write_sweep, CostQuery, SweepSpec};
use crate::embeddings::{encode_records, read_corpus, write_corpus, EmbeddingCorpus};
use crate::eval_stats::{dataset_stats, evaluate};
use crate::numerics::Seed;
use crate::segmenter::{
    group_records, read_documents, read_sentence_records, segment_document, write_sentence_records,
    SegmentConfig, WordPunctCounter, DEFAULT_SEPARATORS,
};

#[derive(Debug, Parser)]
#[command(
    name = "aose",
    version,
    about = "Attention pooling over sentence embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Split documents into bounded sentences.
    Segment(SegmentArgs),
    /// Embed sentences with the deterministic toy encoder.
    EncodeToy(EncodeArgs),
    /// Train the pooling head and classifier on an embedding corpus.
    Train(TrainArgs),
    /// Length-stratified accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Token statistics of a document dataset.
    Stats(StatsArgs),
    /// Attention cost formulas for one query or a sweep.
    Cost(CostArgs),
    /// Rerun the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where to write the run manifest [default: <out>.manifest.json].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SegmentArgs {
    /// Dataset JSONL with `id`, `text`, `label`.
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub min_tokens: usize,
    #[arg(long, default_value_t = 250)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = 8192)]
    pub doc_cap: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    /// Sentences JSONL produced by `segment`.
    pub input: PathBuf,
    #[arg(long, default_value_t = 384)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of classes [default: largest label + 1, at least 2].
    #[arg(long)]
    pub label_count: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Frozen,
    HeadWithInputGrads,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Embeddings JSONL.
    pub input: PathBuf,
    #[arg(long, default_value_t = 2e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub accum_steps: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Frozen)]
    pub mode: ModeArg,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch metrics JSONL [default: <out>.metrics.jsonl].
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Embeddings JSONL.
    pub input: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub threshold: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct StatsArgs {
    /// Dataset JSONL with `id`, `text`, `label`.
    pub input: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub threshold: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CostArgs {
    #[arg(long, requires_all = ["l", "g", "w", "c"], conflicts_with = "sweep")]
    pub t: Option<u64>,
    #[arg(long)]
    pub l: Option<u64>,
    #[arg(long)]
    pub g: Option<u64>,
    #[arg(long)]
    pub w: Option<u64>,
    #[arg(long)]
    pub c: Option<u64>,
    /// Grid such as `t=1..100,l=20,g=2,w=4,c=512`.
    #[arg(long, required_unless_present = "t")]
    pub sweep: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub command: Command,
}

impl RunManifest {
    pub fn new(command: &Command) -> Self {
        let (seed, inputs, outputs) = match command {
            Command::Segment(a) => (None, vec![a.input.clone()], opt(&a.output.out)),
            Command::EncodeToy(a) => (Some(a.seed), vec![a.input.clone()], opt(&a.output.out)),
            Command::Train(a) => (
                Some(a.seed),
                vec![a.input.clone()],
                vec![a.out.clone(), metrics_path(a)],
            ),
            Command::Eval(a) => (
                None,
                vec![a.checkpoint.clone(), a.input.clone()],
                opt(&a.output.out),
            ),
            Command::Stats(a) => (None, vec![a.input.clone()], opt(&a.output.out)),
            Command::Cost(a) => (None, vec![], opt(&a.output.out)),
            Command::Replay(a) => (None, vec![a.manifest.clone()], vec![]),
        };
        Self {
            tool: "aose".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs,
            outputs,
            command: command.clone(),
        }
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("parsing manifest {}", path.display()))
    }
}

fn opt(p: &Option<PathBuf>) -> Vec<PathBuf> {
    p.iter().cloned().collect()
}

fn metrics_path(a: &TrainArgs) -> PathBuf {
    a.metrics
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".metrics.jsonl"))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn open_input(path: &Path) -> anyhow::Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn open_output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_corpus(path: &Path) -> anyhow::Result<EmbeddingCorpus> {
    let (corpus, report) =
        read_corpus(open_input(path)?).with_context(|| format!("reading {}", path.display()))?;
    if report.renormalized > 0 {
        eprintln!(
            "warning: {} vectors in {} were not unit-norm and were re-normalized",
            report.renormalized,
            path.display()
        );
    }
    Ok(corpus)
}

/// Writes the manifest beside the output, or to standard error when the
/// output went to standard output and no manifest path was given.
fn write_manifest(command: &Command) -> anyhow::Result<()> {
    let (explicit, out) = match command {
        Command::Segment(a) => (&a.output.manifest, a.output.out.clone()),
        Command::EncodeToy(a) => (&a.output.manifest, a.output.out.clone()),
        Command::Train(a) => (&a.manifest, Some(a.out.clone())),
        Command::Eval(a) => (&a.output.manifest, a.output.out.clone()),
        Command::Stats(a) => (&a.output.manifest, a.output.out.clone()),
        Command::Cost(a) => (&a.output.manifest, a.output.out.clone()),
        Command::Replay(_) => return Ok(()),
    };
    let manifest = RunManifest::new(command);
    let path = explicit
        .clone()
        .or_else(|| out.map(|o| with_suffix(&o, ".manifest.json")));
    match path {
        Some(p) => {
            let mut w = open_output(Some(&p))?;
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => eprintln!("manifest: {}", serde_json::to_string(&manifest)?),
    }
    Ok(())
}

pub fn run(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::Segment(a) => cmd_segment(a)?,
        Command::EncodeToy(a) => cmd_encode_toy(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Stats(a) => cmd_stats(a)?,
        Command::Cost(a) => cmd_cost(a)?,
        Command::Replay(a) => {
            let manifest = RunManifest::read(&a.manifest)?;
            if matches!(manifest.command, Command::Replay(_)) {
                bail!("a manifest cannot replay another replay");
            }
            return run(&manifest.command);
        }
    }
    write_manifest(command)
}

pub fn cmd_segment(a: &SegmentArgs) -> anyhow::Result<()> {
    let cfg = SegmentConfig {
        min_tokens: a.min_tokens,
        max_tokens: a.max_tokens,
        doc_token_cap: a.doc_cap,
        separators: DEFAULT_SEPARATORS.to_vec(),
    };
    cfg.validate()?;
    let docs = read_documents(open_input(&a.input)?)
        .with_context(|| format!("reading {}", a.input.display()))?;
    if docs.is_empty() {
        bail!("no documents in {}", a.input.display());
    }
    let mut out = open_output(a.output.out.as_deref())?;
    for doc in &docs {
        let seg = segment_document(doc, &cfg, &WordPunctCounter)?;
        let records: Vec<_> = seg.records().collect();
        write_sentence_records(&mut out, &records)?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_encode_toy(a: &EncodeArgs) -> anyhow::Result<()> {
    if a.dim < 2 {
        bail!("--dim must be at least 2, got {}", a.dim);
    }
    let records = read_sentence_records(open_input(&a.input)?)
        .with_context(|| format!("reading {}", a.input.display()))?;
    if records.is_empty() {
        bail!("no sentences in {}", a.input.display());
    }
    let docs = group_records(records)?;
    let corpus = encode_records(&docs, a.dim, Seed(a.seed), a.label_count)?;
    write_corpus(&corpus, open_output(a.output.out.as_deref())?)?;
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let corpus = load_corpus(&a.input)?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        accumulation_steps: a.accum_steps,
        epochs: a.epochs,
        seed: Seed(a.seed),
        mode: match a.mode {
            ModeArg::Frozen => TrainMode::Frozen,
            ModeArg::HeadWithInputGrads => TrainMode::HeadWithInputGrads,
        },
    };
    let output = train(&corpus, &cfg)?;
    let mut metrics = open_output(Some(&metrics_path(a)))?;
    for m in &output.metrics {
        serde_json::to_writer(&mut metrics, m)?;
        metrics.write_all(b"\n")?;
    }
    metrics.flush()?;
    if let Some(last) = output.metrics.last() {
        eprintln!(
            "epoch {}: loss {:.6}, train accuracy {:.4}",
            last.epoch, last.mean_loss, last.train_accuracy
        );
    }
    Checkpoint::new(output.model, cfg).write(open_output(Some(&a.out))?)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let checkpoint = Checkpoint::read(open_input(&a.checkpoint)?)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let corpus = load_corpus(&a.input)?;
    let report = evaluate(&checkpoint.model()?, &corpus, a.threshold)?;
    let mut out = open_output(a.output.out.as_deref())?;
    match a.format {
        ReportFormat::Json => writeln!(out, "{}", report.to_json())?,
        ReportFormat::Table => write!(out, "{}", report.to_table())?,
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs) -> anyhow::Result<()> {
    let docs = read_documents(open_input(&a.input)?)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let stats = dataset_stats(&docs, &WordPunctCounter, a.threshold);
    let mut out = open_output(a.output.out.as_deref())?;
    serde_json::to_writer(&mut out, &stats)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn cmd_cost(a: &CostArgs) -> anyhow::Result<()> {
    let queries = match (&a.sweep, a.t, a.l, a.g, a.w, a.c) {
        (Some(spec), ..) => spec.parse::<SweepSpec>()?.queries(),
        (None, Some(t), Some(l), Some(g), Some(w), Some(c)) => {
            let q = CostQuery { t, l, g, w, c };
            costs(&q)?;
            vec![q]
        }
        _ => bail!("give either --sweep or all of --t --l --g --w --c"),
    };
    if queries.is_empty() {
        bail!("sweep produced no valid queries");
    }
    let mut out = open_output(a.output.out.as_deref())?;
    write_sweep(&mut out, &queries)?;
    out.flush()?;
    Ok(())
}
