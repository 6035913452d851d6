mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use anyhow::{bail, Context, Result};
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use latrank::bm25::{InvertedIndex, INDEX_FORMAT_VERSION};
use latrank::budget::{calibrate, plan_budget, run_queries, save_latency_csv, BudgetPlan, CalibrationOptions, LatencyProfile};
use latrank::corpus::{
    load_collection, load_qrels, load_queries, save_collection, save_qrels, save_queries, split_queries, term_vocabulary,
    Corpus, RunFile, SyntheticConfig,
};
use latrank::eval::{
    mrr_at, ndcg_at, plot_tradeoff, probe_confidence, save_tradeoff_csv, sweep, write_confidence_csv, Metric, Series,
    DEFAULT_K_GRID,
};
use latrank::model::{load_checkpoint, CrossEncoder, CHECKPOINT_FORMAT_VERSION};
use latrank::tokenizer::{Vocab, DEFAULT_MAX_LEN};
use latrank::train::{
    ablation_grid, prepare_training_queries, save_log_csv, train, write_ablation_csv, LossKind, RerankSet, TrainConfig,
    TrainInputs,
};
use serde::Serialize;

use config::{given, pick, FileConfig, ModelSpec};

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{} (checkpoint format {CHECKPOINT_FORMAT_VERSION}, index format {INDEX_FORMAT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
});

#[derive(Parser)]
#[command(name = "latrank", version = VERSION.as_str(), about = "BM25 + shallow cross-encoder reranking under a latency budget")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores). Timed subcommands always use 1.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run directory; every output file is written here.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// JSON config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index from a collection TSV.
    BuildIndex {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate a synthetic collection, queries, qrels, splits and vocabulary.
    Synth(SynthArgs),
    /// Train a cross-encoder.
    Train(TrainArgs),
    /// Train one model per (loss, negatives) cell and score each on held-out queries.
    Ablate {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        test_queries: PathBuf,
        /// Comma-separated losses.
        #[arg(long, value_delimiter = ',', default_value = "bce,gbce")]
        losses: Vec<LossKind>,
        /// Comma-separated negatives-per-positive values.
        #[arg(long, value_delimiter = ',', default_value = "1,2,8,32,128")]
        negatives_grid: Vec<usize>,
    },
    /// Measure per-pair model cost and first-stage cost.
    Calibrate {
        #[command(flatten)]
        input: ServeArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        #[arg(long, default_value_t = 1000)]
        n_retrieve: usize,
    },
    /// Retrieve and rerank queries, writing a TREC run and per-query latencies.
    Rerank {
        #[command(flatten)]
        input: ServeArgs,
        #[arg(long)]
        queries: PathBuf,
        /// Latency profile from `calibrate`; the depth then follows from --omega.
        #[arg(long, conflicts_with = "k")]
        profile: Option<PathBuf>,
        /// Per-query budget in ms.
        #[arg(long, default_value_t = 25.0)]
        omega: f64,
        /// Fixed rerank depth instead of a budget.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        n_retrieve: usize,
        #[arg(long, default_value = "latrank")]
        tag: String,
    },
    /// Score a TREC run against qrels.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 10)]
        cutoff: usize,
    },
    /// Mean latency and quality at each rerank depth, plus an SVG plot.
    Sweep {
        #[command(flatten)]
        input: ServeArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50,100,200,500,1000")]
        k_grid: Vec<usize>,
        #[arg(long, default_value = "ndcg@10")]
        metric: Metric,
        /// Untimed queries run before measuring.
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        /// Low-latency region shaded in the plot, in ms.
        #[arg(long, default_value_t = 50.0)]
        cutoff_ms: f64,
        /// Series name in the plot legend.
        #[arg(long, default_value = "model")]
        label: String,
    },
    /// Mean / min / max relevance probability at each rank of the reranked list.
    ProbeConfidence {
        #[command(flatten)]
        input: ServeArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 100)]
        depth: usize,
    },
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    n_docs: usize,
    #[arg(long, default_value_t = 50)]
    n_queries: usize,
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    relevant: usize,
    #[arg(long, default_value_t = 8)]
    n_validation: usize,
    #[arg(long, default_value_t = 12)]
    n_test: usize,
}

#[derive(Args, Clone)]
struct Collection {
    /// Collection TSV (doc_id, text).
    #[arg(long)]
    corpus: PathBuf,
    /// Prebuilt index; built in memory from --corpus when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Vocabulary, one token per line.
    #[arg(long)]
    vocab: PathBuf,
}

#[derive(Args, Clone)]
struct ServeArgs {
    #[command(flatten)]
    collection: Collection,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Tokenizer length [default: min(256, model positions)].
    #[arg(long)]
    max_len: Option<usize>,
    /// Pairs per forward pass.
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    collection: Collection,
    #[arg(long)]
    train_queries: PathBuf,
    #[arg(long)]
    validation_queries: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Preset name (tiny, mini, small).
    #[arg(long, default_value = "tiny")]
    model: String,
    #[arg(long, default_value_t = LossKind::Gbce)]
    loss: LossKind,
    /// Sampled negatives per positive.
    #[arg(long, default_value_t = 128)]
    negatives: usize,
    /// Calibration parameter.
    #[arg(long, default_value_t = 0.75)]
    t: f64,
    /// First-stage depth negatives are drawn from.
    #[arg(long, default_value_t = 1000)]
    pool: usize,
    /// Queries per batch.
    #[arg(long, default_value_t = 8)]
    batch_positives: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f32,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f32,
    /// Batches between validations.
    #[arg(long, default_value_t = 600)]
    validation_every: usize,
    /// Validations without improvement before stopping.
    #[arg(long, default_value_t = 200)]
    patience: usize,
    #[arg(long)]
    max_batches: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = 100)]
    validation_depth: usize,
}

/// Failures that map to exit code 2 without coming from the core library.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    seed: u64,
    file: FileConfig,
    out_dir: Option<PathBuf>,
}

impl Ctx {
    fn out(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out_dir.as_ref().ok_or_else(|| usage("--out-dir is required"))?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir.join(name))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let matches = Cli::command().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            eprintln!("latrank: error[{kind}]: {}", one_line(&e));
            ExitCode::from(code)
        }
    }
}

/// Error chain joined with ": ", skipping causes already spelled out by
/// their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string().replace('\n', " ");
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return (2, "usage");
        }
        if let Some(err) = cause.downcast_ref::<latrank::Error>() {
            return match err {
                latrank::Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => (2, "missing-file"),
                latrank::Error::InvalidArgument(_) | latrank::Error::Json(_) => (2, "invalid-config"),
                _ => (1, "runtime"),
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return (2, "missing-file");
            }
        }
    }
    (1, "runtime")
}

fn run(matches: &ArgMatches) -> Result<()> {
    let cli = Cli::from_arg_matches(matches)?;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = if given(matches, "seed") || given(sub, "seed") { cli.seed } else { file.seed.unwrap_or(cli.seed) };
    let timed = matches!(cli.command, Command::Calibrate { .. } | Command::Rerank { .. } | Command::Sweep { .. });
    let threads = if timed { 1 } else { cli.threads };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("starting thread pool")?;
    let ctx = Ctx {
        seed,
        file,
        out_dir: cli.out_dir.clone(),
    };
    match &cli.command {
        Command::BuildIndex { corpus } => build_index(&ctx, corpus),
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, sub, a),
        Command::Ablate {
            train,
            test_queries,
            losses,
            negatives_grid,
        } => ablate(&ctx, sub, train, test_queries, losses, negatives_grid),
        Command::Calibrate {
            input,
            queries,
            samples,
            warmup,
            n_retrieve,
        } => {
            let (corpus, index, enc) = serving(&ctx, sub, input)?;
            let queries = load_queries(queries)?;
            let opts = CalibrationOptions {
                batch_size: enc.batch_size,
                warmup: *warmup,
                samples: *samples,
                n_retrieve: pick(sub, "n_retrieve", n_retrieve, ctx.file.n_retrieve),
            };
            let profile = calibrate(&enc, &corpus, &index, &queries, opts)?;
            for w in &profile.warnings {
                log::warn!("{w}");
            }
            let path = ctx.out("profile.json")?;
            profile.save(&path)?;
            println!(
                "lambda {:.4} ms/pair, first stage {:.4} ms, tokenize {:.4} ms/pair -> {}",
                profile.lambda_ms,
                profile.first_stage_ms,
                profile.tokenize_ms_per_pair,
                path.display()
            );
            Ok(())
        }
        Command::Rerank {
            input,
            queries,
            profile,
            omega,
            k,
            n_retrieve,
            tag,
        } => {
            let plan = match (profile, k) {
                (_, Some(k)) => BudgetPlan::fixed(*k),
                (Some(p), None) => plan_budget(&LatencyProfile::load(p)?, pick(sub, "omega", omega, ctx.file.omega_ms)),
                (None, None) => return Err(usage("rerank needs --profile (with --omega) or --k")),
            };
            log::info!("plan: k_max {} ({:?})", plan.k_max, plan.fallback);
            let (corpus, index, enc) = serving(&ctx, sub, input)?;
            let queries = load_queries(queries)?;
            let n_retrieve = pick(sub, "n_retrieve", n_retrieve, ctx.file.n_retrieve);
            let (run, lat) = run_queries(&enc, &corpus, &index, &queries, &plan, n_retrieve, tag)?;
            run.save(&ctx.out("run.trec")?)?;
            save_latency_csv(&lat, &ctx.out("latency.csv")?)?;
            write_json(&ctx.out("plan.json")?, &plan)?;
            let mean = lat.iter().map(|r| r.total_ms).sum::<f64>() / lat.len().max(1) as f64;
            println!("{} queries, mean latency {mean:.3} ms", lat.len());
            Ok(())
        }
        Command::Evaluate { run, qrels, cutoff } => {
            let run = RunFile::load(run)?;
            let qrels = load_qrels(qrels)?;
            let ndcg = ndcg_at(&run, &qrels, *cutoff)?;
            let mrr = mrr_at(&run, &qrels, *cutoff)?;
            println!("ndcg@{cutoff}\t{:.6}\t{}", ndcg.mean, ndcg.n_queries());
            println!("mrr@{cutoff}\t{:.6}\t{}", mrr.mean, mrr.n_queries());
            #[derive(Serialize)]
            struct Eval {
                ndcg: latrank::eval::MetricReport,
                mrr: latrank::eval::MetricReport,
            }
            write_json(&ctx.out("eval.json")?, &Eval { ndcg, mrr })
        }
        Command::Sweep {
            input,
            queries,
            qrels,
            k_grid,
            metric,
            warmup,
            cutoff_ms,
            label,
        } => {
            let grid = if given(sub, "k_grid") {
                k_grid.clone()
            } else {
                ctx.file.k_grid.clone().unwrap_or_else(|| DEFAULT_K_GRID.to_vec())
            };
            let (corpus, index, enc) = serving(&ctx, sub, input)?;
            let queries = load_queries(queries)?;
            let qrels = load_qrels(qrels)?;
            let points = sweep(&enc, &corpus, &index, &queries, &qrels, &grid, *metric, *warmup)?;
            save_tradeoff_csv(&points, &ctx.out("tradeoff.csv")?)?;
            let svg = plot_tradeoff(
                &[Series {
                    name: label.clone(),
                    points: points.clone(),
                }],
                *cutoff_ms,
            )?;
            let path = ctx.out("tradeoff.svg")?;
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            for p in &points {
                println!("{}\t{:.3}\t{:.4}", p.k, p.mean_latency_ms, p.metric_value);
            }
            Ok(())
        }
        Command::ProbeConfidence { input, queries, depth } => {
            let (corpus, index, enc) = serving(&ctx, sub, input)?;
            let queries = load_queries(queries)?;
            let probe = probe_confidence(&enc, &corpus, &index, &queries, *depth)?;
            let path = ctx.out("confidence.csv")?;
            let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            write_confidence_csv(&probe.rows, std::io::BufWriter::new(f))?;
            println!("{} queries probed -> {}", probe.n_queries, path.display());
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_index(corpus: &Corpus, path: Option<&Path>) -> Result<InvertedIndex> {
    match path {
        Some(p) => {
            let index = InvertedIndex::load(p)?;
            if index.n_docs() != corpus.len() {
                bail!(latrank::Error::InvalidArgument(format!(
                    "index {} has {} documents, collection has {}",
                    p.display(),
                    index.n_docs(),
                    corpus.len()
                )));
            }
            Ok(index)
        }
        None => Ok(InvertedIndex::build(corpus)?),
    }
}

fn serving(ctx: &Ctx, sub: &ArgMatches, a: &ServeArgs) -> Result<(Corpus, InvertedIndex, CrossEncoder)> {
    let corpus = load_collection(&a.collection.corpus)?;
    let index = load_index(&corpus, a.collection.index.as_deref())?;
    let vocab = Vocab::load(&a.collection.vocab)?;
    let params = load_checkpoint(&a.checkpoint)?;
    let max_len = a.max_len.unwrap_or_else(|| params.config().max_len.min(DEFAULT_MAX_LEN));
    let batch = pick(sub, "batch_size", &a.batch_size, ctx.file.batch_size);
    Ok((corpus, index, CrossEncoder::new(params, vocab, max_len, batch)?))
}

fn build_index(ctx: &Ctx, corpus: &Path) -> Result<()> {
    let corpus = load_collection(corpus)?;
    let index = InvertedIndex::build(&corpus)?;
    let path = ctx.out("index.bin")?;
    index.save(&path)?;
    println!("{} documents, {} terms -> {}", index.n_docs(), index.n_terms(), path.display());
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let (corpus, queries, qrels) = SyntheticConfig::new(ctx.seed, a.n_docs, a.n_queries, a.vocab_size, a.relevant).generate()?;
    let split = split_queries(&queries, a.n_validation, a.n_test, ctx.seed)?;
    save_collection(&corpus, &ctx.out("collection.tsv")?)?;
    save_queries(&queries, &ctx.out("queries.tsv")?)?;
    save_queries(&split.train, &ctx.out("queries.train.tsv")?)?;
    save_queries(&split.validation, &ctx.out("queries.validation.tsv")?)?;
    save_queries(&split.test, &ctx.out("queries.test.tsv")?)?;
    save_qrels(&qrels, &ctx.out("qrels.txt")?)?;
    Vocab::with_terms(term_vocabulary(a.vocab_size)).save(&ctx.out("vocab.txt")?)?;
    println!(
        "{} documents, {} queries ({} train / {} validation / {} test)",
        corpus.len(),
        queries.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

/// Training settings after applying defaults, then the config file, then flags.
fn resolve_train(ctx: &Ctx, m: &ArgMatches, a: &TrainArgs) -> TrainConfig {
    let base = ctx.file.train.clone().unwrap_or_default();
    TrainConfig {
        batch_positives: pick(m, "batch_positives", &a.batch_positives, Some(base.batch_positives)),
        negatives_per_positive: pick(m, "negatives", &a.negatives, Some(base.negatives_per_positive)),
        candidate_pool_size: pick(m, "pool", &a.pool, Some(base.candidate_pool_size)),
        calibration_t: pick(m, "t", &a.t, Some(base.calibration_t)),
        loss_kind: pick(m, "loss", &a.loss, Some(base.loss_kind)),
        lr: pick(m, "lr", &a.lr, Some(base.lr)),
        weight_decay: pick(m, "weight_decay", &a.weight_decay, Some(base.weight_decay)),
        validation_every: pick(m, "validation_every", &a.validation_every, Some(base.validation_every)),
        patience: pick(m, "patience", &a.patience, Some(base.patience)),
        seed: ctx.seed,
        max_len: pick(m, "max_len", &a.max_len, Some(base.max_len)),
        max_batches: if given(m, "max_batches") { a.max_batches } else { base.max_batches },
        validation_depth: pick(m, "validation_depth", &a.validation_depth, Some(base.validation_depth)),
    }
}

struct TrainData {
    corpus: Corpus,
    index: InvertedIndex,
    vocab: Vocab,
    qrels: latrank::corpus::Qrels,
    train: Vec<latrank::train::TrainQuery>,
    validation: RerankSet,
    model: latrank::model::ModelConfig,
    cfg: TrainConfig,
}

fn train_data(ctx: &Ctx, m: &ArgMatches, a: &TrainArgs) -> Result<TrainData> {
    let cfg = resolve_train(ctx, m, a);
    cfg.validate()?;
    let corpus = load_collection(&a.collection.corpus)?;
    let index = load_index(&corpus, a.collection.index.as_deref())?;
    let vocab = Vocab::load(&a.collection.vocab)?;
    let qrels = load_qrels(&a.qrels)?;
    let spec = match (&ctx.file.model, given(m, "model")) {
        (Some(spec), false) => spec.clone(),
        _ => ModelSpec::Preset(a.model.clone()),
    };
    let model = spec.resolve(vocab.len())?;
    if cfg.max_len > model.max_len {
        return Err(usage(format!(
            "--max-len {} exceeds the model's {} positions",
            cfg.max_len, model.max_len
        )));
    }
    let (train, dropped) = prepare_training_queries(
        &corpus,
        &index,
        &vocab,
        &load_queries(&a.train_queries)?,
        &qrels,
        cfg.candidate_pool_size,
    )?;
    if !dropped.is_empty() {
        log::warn!("dropped {} training queries without a relevant candidate", dropped.len());
    }
    let validation = RerankSet::build(
        &corpus,
        &index,
        &vocab,
        &load_queries(&a.validation_queries)?,
        &qrels,
        cfg.validation_depth,
        cfg.max_len,
    )?;
    Ok(TrainData {
        corpus,
        index,
        vocab,
        qrels,
        train,
        validation,
        model,
        cfg,
    })
}

fn train_cmd(ctx: &Ctx, m: &ArgMatches, a: &TrainArgs) -> Result<()> {
    let d = train_data(ctx, m, a)?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        model: &'a latrank::model::ModelConfig,
        train: &'a TrainConfig,
    }
    write_json(
        &ctx.out("train_config.json")?,
        &Resolved {
            model: &d.model,
            train: &d.cfg,
        },
    )?;
    let ckpt = ctx.out("model.ckpt")?;
    let inputs = TrainInputs {
        corpus: &d.corpus,
        vocab: &d.vocab,
        train: &d.train,
        validation: &d.validation,
    };
    let out = train(&inputs, d.model, &d.cfg, Some(&ckpt))?;
    save_log_csv(&out.log, &ctx.out("train_log.csv")?)?;
    println!(
        "{} steps ({:?}); best validation ndcg@10 {:.4} at step {} -> {}",
        out.steps,
        out.stop,
        out.best_ndcg10,
        out.best_step,
        ckpt.display()
    );
    Ok(())
}

fn ablate(
    ctx: &Ctx,
    m: &ArgMatches,
    a: &TrainArgs,
    test_queries: &Path,
    losses: &[LossKind],
    negatives: &[usize],
) -> Result<()> {
    let d = train_data(ctx, m, a)?;
    let test = RerankSet::build(
        &d.corpus,
        &d.index,
        &d.vocab,
        &load_queries(test_queries)?,
        &d.qrels,
        d.cfg.validation_depth,
        d.cfg.max_len,
    )?;
    let inputs = TrainInputs {
        corpus: &d.corpus,
        vocab: &d.vocab,
        train: &d.train,
        validation: &d.validation,
    };
    let cells = ablation_grid(&inputs, &test, d.model, &d.cfg, losses, negatives)?;
    let path = ctx.out("ablation.csv")?;
    let f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_ablation_csv(&cells, std::io::BufWriter::new(f))?;
    for c in &cells {
        println!("{}\t{}\t{:.4}", c.loss, c.negatives, c.ndcg10);
    }
    Ok(())
}
