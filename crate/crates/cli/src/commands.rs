//! Subcommand implementations. Every command resolves options as
//! flag > config file > default and writes the resolved view next to its
//! primary output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;

use rrk_core::bench::{bench_latency, BenchQuery, SystemSpec};
use rrk_core::corpus::{self, GenConfig};
use rrk_core::cost::Mode;
use rrk_core::index::{build_index, storage_estimate, CompressedIndex, IndexDtype};
use rrk_core::metrics::{evaluate_run, Gain};
use rrk_core::model::{load_checkpoint, Checkpoint, Model, ModelConfig};
use rrk_core::pipeline::rerank_queries;
use rrk_core::rerank::{
    build_listwise_input, pointwise_score, pointwise_score_textual, score_listwise,
};
use rrk_core::retrieve::{Bm25Index, Bm25Params};
use rrk_core::teacher::SyntheticTeacher;
use rrk_core::tokenizer::Tokenizer;
use rrk_core::train::{
    build_training_set, run_training, BuildOptions, CompressorMode, TrainConfig, TrainData,
    TrainMode,
};
use rrk_core::trec::{read_qrels, read_run, write_qrels, write_run};
use rrk_core::Error;

use crate::config::Resolver;

const RESOLVED_NAME: &str = "config.resolved.cfg";

fn resolved_path_for(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    name.push_str(".resolved.cfg");
    output.with_file_name(name)
}

fn load_docs(path: &Path, tok: &Tokenizer) -> Result<Vec<(String, Vec<u32>)>> {
    let docs = corpus::read_documents_jsonl(path)
        .with_context(|| format!("reading corpus {}", path.display()))?;
    Ok(docs
        .into_iter()
        .map(|d| (d.id, tok.encode(&d.text)))
        .collect())
}

fn open_checkpoint(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn load_store(ckpt: &Checkpoint, prefix: &str, path: &Path) -> Result<Model<f32>> {
    if !ckpt.has_prefix(prefix) {
        return Err(Error::Config(format!(
            "checkpoint {} holds no {prefix} parameters",
            path.display()
        ))
        .into());
    }
    Ok(Model::from_parts(ckpt.config.clone(), ckpt.extract(prefix)?)?)
}

fn worker_threads(requested: usize) -> usize {
    let capped = match std::env::var("RRK_THREADS") {
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => requested.min(n),
            _ => {
                eprintln!("ignoring unparseable RRK_THREADS={v:?}");
                requested
            }
        },
        Err(_) => requested,
    };
    capped.max(1)
}

// ---------------------------------------------------------------- gen-corpus

#[derive(Args)]
pub struct GenCorpusArgs {
    /// Key-value config file; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for docs.jsonl, queries, and qrels
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    docs: Option<usize>,
    /// Training query count
    #[arg(long)]
    queries: Option<usize>,
    /// Held-out query count
    #[arg(long)]
    eval_queries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing corpus files
    #[arg(long)]
    force: bool,
}

pub fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let out = r.req_path("out", a.out)?;
    let docs = r.get("docs", a.docs, corpus::DEFAULT_DOCS)?;
    let queries = r.get("queries", a.queries, corpus::DEFAULT_TRAIN_QUERIES)?;
    let eval_queries = r.get("eval-queries", a.eval_queries, corpus::DEFAULT_EVAL_QUERIES)?;
    let seed = r.get("seed", a.seed, 42u64)?;

    let targets = [
        "docs.jsonl",
        "train-queries.tsv",
        "eval-queries.tsv",
        "qrels.txt",
    ];
    if !a.force {
        for name in targets {
            let p = out.join(name);
            if p.exists() {
                return Err(Error::Config(format!(
                    "{} already exists; pass --force to overwrite",
                    p.display()
                ))
                .into());
            }
        }
    }

    let c = corpus::generate(&GenConfig {
        n_docs: docs,
        n_train_queries: queries,
        n_eval_queries: eval_queries,
        seed,
    })?;
    std::fs::create_dir_all(&out)?;
    corpus::write_documents_jsonl(&out.join("docs.jsonl"), &c.documents)?;
    corpus::write_queries_tsv(&out.join("train-queries.tsv"), &c.train_queries)?;
    corpus::write_queries_tsv(&out.join("eval-queries.tsv"), &c.eval_queries)?;
    write_qrels(&out.join("qrels.txt"), &c.qrels)?;
    r.write_resolved(&out.join(RESOLVED_NAME))?;
    println!(
        "wrote {} docs, {} train + {} eval queries to {}",
        c.documents.len(),
        c.train_queries.len(),
        c.eval_queries.len(),
        out.display()
    );
    Ok(())
}

// --------------------------------------------------------------------- train

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory produced by gen-corpus
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// listwise | pointwise
    #[arg(long)]
    mode: Option<String>,
    /// frozen | scratch | finetune
    #[arg(long)]
    compressor: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    grad_accum: Option<usize>,
    /// RankNet temperature
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    max_doc_len: Option<usize>,
    /// Candidates sampled per training query
    #[arg(long)]
    sample_docs: Option<usize>,
    /// First-stage pool size per training query
    #[arg(long)]
    pool: Option<usize>,
    /// Cap on training queries; 0 uses all
    #[arg(long)]
    train_queries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint to start from (required for frozen/finetune)
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Loss curve CSV; defaults to loss.csv in the checkpoint dir
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    // Architecture, used when the compressor mode is scratch.
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
    #[arg(long)]
    mem_tokens: Option<usize>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let corpus_dir = r.req_path("corpus", a.corpus)?;
    let mode: TrainMode = r.get("mode", a.mode, "listwise".to_string())?.parse()?;
    let compressor_mode: CompressorMode =
        r.get("compressor", a.compressor, "scratch".to_string())?.parse()?;
    let lr = r.get("lr", a.lr, 1e-3)?;
    let epochs = r.get("epochs", a.epochs, 2usize)?;
    let grad_accum = r.get("grad-accum", a.grad_accum, 4usize)?;
    let tau = r.get("tau", a.tau, 0.125)?;
    let max_doc_len = r.get("max-doc-len", a.max_doc_len, 128usize)?;
    let sample_docs = r.get("sample-docs", a.sample_docs, 16usize)?;
    let pool = r.get("pool", a.pool, 50usize)?;
    let query_cap = r.get("train-queries", a.train_queries, 0usize)?;
    let seed = r.get("seed", a.seed, 42u64)?;
    let init_checkpoint = r.path("init-checkpoint", a.init_checkpoint)?;
    let checkpoint_dir = r.req_path("checkpoint-dir", a.checkpoint_dir)?;
    let loss_csv = r
        .path("loss-csv", a.loss_csv)?
        .unwrap_or_else(|| checkpoint_dir.join("loss.csv"));

    let defaults = ModelConfig::default();
    let model = ModelConfig {
        vocab_size: r.get("vocab-size", a.vocab_size, defaults.vocab_size)?,
        d_model: r.get("d-model", a.d_model, defaults.d_model)?,
        n_layers: r.get("n-layers", a.n_layers, defaults.n_layers)?,
        n_heads: r.get("n-heads", a.n_heads, defaults.n_heads)?,
        d_ff: r.get("d-ff", a.d_ff, defaults.d_ff)?,
        max_seq_len: r.get("max-seq-len", a.max_seq_len, defaults.max_seq_len)?,
        mem_tokens: r.get("mem-tokens", a.mem_tokens, defaults.mem_tokens)?,
        seed,
    };

    // Loaded checkpoints carry their own architecture; tokenize with it.
    let effective = match &init_checkpoint {
        Some(path) => open_checkpoint(path)?.config,
        None => model.clone(),
    };
    let tok = Tokenizer::new(effective.text_vocab());

    let corpus = load_corpus_dir(&corpus_dir, &tok)?;
    let n_queries = if query_cap == 0 {
        corpus.data.train_queries.len()
    } else {
        query_cap.min(corpus.data.train_queries.len())
    };
    let teacher = SyntheticTeacher::new(seed);
    let opts = BuildOptions {
        n_docs: sample_docs,
        pool,
        seed,
    };
    let (examples, warnings) = build_training_set(
        &corpus.data,
        &corpus.bm25,
        &tok,
        &teacher,
        n_queries,
        &opts,
    );
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if examples.is_empty() {
        return Err(Error::Invalid("no usable training examples".into()).into());
    }

    let query_tokens = corpus
        .data
        .train_queries
        .iter()
        .map(|(qid, text)| (qid.clone(), tok.encode(text)))
        .collect();
    let data = TrainData {
        doc_tokens: corpus.doc_tokens,
        query_tokens,
        examples,
    };

    std::fs::create_dir_all(&checkpoint_dir)?;
    let cfg = TrainConfig {
        model,
        mode,
        compressor_mode,
        lr,
        epochs,
        grad_accum,
        tau,
        max_doc_len,
        seed,
        init_checkpoint,
        checkpoint_dir: Some(checkpoint_dir.clone()),
        loss_csv: Some(loss_csv),
    };
    let (_, _, report) = run_training(&cfg, &data)?;
    r.write_resolved(&checkpoint_dir.join(RESOLVED_NAME))?;

    let n = report.losses.len();
    let head = report.mean_loss_over(0..n.min(20));
    let tail = report.mean_loss_over(n.saturating_sub(20)..n);
    println!(
        "trained {} steps ({} examples x {} epochs), loss {head:.4} -> {tail:.4}",
        report.steps,
        data.examples.len(),
        epochs
    );
    for c in &report.checkpoints {
        println!("checkpoint {}", c.display());
    }
    Ok(())
}

/// Corpus directory contents, tokenized once.
struct LoadedCorpus {
    data: corpus::ToyCorpus,
    doc_tokens: BTreeMap<String, Vec<u32>>,
    bm25: Bm25Index,
}

fn load_corpus_dir(dir: &Path, tok: &Tokenizer) -> Result<LoadedCorpus> {
    let documents = corpus::read_documents_jsonl(&dir.join("docs.jsonl"))
        .with_context(|| format!("reading corpus dir {}", dir.display()))?;
    let train_queries = corpus::read_queries_tsv(&dir.join("train-queries.tsv"))?;
    let eval_path = dir.join("eval-queries.tsv");
    let eval_queries = if eval_path.exists() {
        corpus::read_queries_tsv(&eval_path)?
    } else {
        Vec::new()
    };
    let qrels = read_qrels(&dir.join("qrels.txt"))?;
    let tokenized: Vec<(String, Vec<u32>)> = documents
        .iter()
        .map(|d| (d.id.clone(), tok.encode(&d.text)))
        .collect();
    let bm25 = Bm25Index::build(&tokenized, Bm25Params::default())?;
    Ok(LoadedCorpus {
        data: corpus::ToyCorpus {
            documents,
            train_queries,
            eval_queries,
            qrels,
        },
        doc_tokens: tokenized.into_iter().collect(),
        bm25,
    })
}

// ------------------------------------------------------------------ compress

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint holding compressor parameters
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// docs.jsonl to compress
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out_index: Option<PathBuf>,
    #[arg(long)]
    max_doc_len: Option<usize>,
    /// f32 | f16
    #[arg(long)]
    dtype: Option<String>,
    /// Worker threads (capped by RRK_THREADS)
    #[arg(long)]
    threads: Option<usize>,
}

pub fn compress(a: CompressArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let ckpt_path = r.req_path("checkpoint", a.checkpoint)?;
    let corpus_path = r.req_path("corpus", a.corpus)?;
    let out_index = r.req_path("out-index", a.out_index)?;
    let max_doc_len = r.get("max-doc-len", a.max_doc_len, 128usize)?;
    let dtype: IndexDtype = r.get("dtype", a.dtype, "f32".to_string())?.parse()?;
    let default_threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = worker_threads(r.get("threads", a.threads, default_threads)?);

    let ckpt = open_checkpoint(&ckpt_path)?;
    let model = load_store(&ckpt, "compressor", &ckpt_path)?;
    let tok = Tokenizer::new(model.config.text_vocab());
    let docs = load_docs(&corpus_path, &tok)?;

    let t = Instant::now();
    build_index(&out_index, &model, &docs, max_doc_len, threads, dtype)?;
    r.write_resolved(&resolved_path_for(&out_index))?;

    let l = model.config.mem_tokens;
    let d = model.config.d_model;
    let payload = storage_estimate(docs.len() as u64, l, d, dtype.bytes_per_value());
    let factor = max_doc_len as f64 / l as f64;
    println!(
        "indexed {} docs in {:.1}s -> {}",
        docs.len(),
        t.elapsed().as_secs_f64(),
        out_index.display()
    );
    println!("embedding payload: {payload} bytes ({l} x {d} {dtype} per doc)");
    if factor.fract() == 0.0 {
        println!("compression factor: x{factor:.0}");
    } else {
        println!("compression factor: x{factor:.2}");
    }
    Ok(())
}

// -------------------------------------------------------------------- rerank

#[derive(Args)]
pub struct RerankArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Checkpoint holding reranker parameters
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Queries TSV (qid<TAB>text)
    #[arg(long)]
    queries: Option<PathBuf>,
    /// docs.jsonl for the first-stage lexical retriever
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    out_run: Option<PathBuf>,
    /// Run tag written into the TREC output
    #[arg(long)]
    tag: Option<String>,
}

pub fn rerank(a: RerankArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let index_path = r.req_path("index", a.index)?;
    let ckpt_path = r.req_path("checkpoint", a.checkpoint)?;
    let queries_path = r.req_path("queries", a.queries)?;
    let corpus_path = r.req_path("corpus", a.corpus)?;
    let topk = r.get("topk", a.topk, 50usize)?;
    let out_run = r.req_path("out-run", a.out_run)?;
    let tag = r.get("tag", a.tag, "rrk".to_string())?;

    let ckpt = open_checkpoint(&ckpt_path)?;
    let model = load_store(&ckpt, "reranker", &ckpt_path)?;
    let index = CompressedIndex::open(&index_path)?;
    if index.mem_tokens != model.config.mem_tokens || index.d_model != model.config.d_model {
        return Err(Error::Config(format!(
            "index shape {}x{} does not match model {}x{}",
            index.mem_tokens, index.d_model, model.config.mem_tokens, model.config.d_model
        ))
        .into());
    }
    let tok = Tokenizer::new(model.config.text_vocab());
    let docs = load_docs(&corpus_path, &tok)?;
    let bm25 = Bm25Index::build(&docs, Bm25Params::default())?;
    let queries = corpus::read_queries_tsv(&queries_path)
        .with_context(|| format!("reading queries {}", queries_path.display()))?;

    let out = rerank_queries(&model, &index, &bm25, &tok, &queries, topk, &tag)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    write_run(&out_run, &out.run.results, &tag)?;
    r.write_resolved(&resolved_path_for(&out_run))?;
    println!(
        "reranked {} queries (top {topk}) -> {}",
        queries.len(),
        out_run.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------- eval

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// exponential | linear (exp | lin)
    #[arg(long)]
    gain: Option<String>,
    /// Print one line per query
    #[arg(long)]
    per_query: bool,
    /// Optional report file; the resolved config lands next to it
    #[arg(long)]
    out_report: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let run_path = r.req_path("run", a.run)?;
    let qrels_path = r.req_path("qrels", a.qrels)?;
    let k = r.get("k", a.k, 10usize)?;
    let gain_raw = r.get("gain", a.gain, "exponential".to_string())?;
    let gain: Gain = match gain_raw.as_str() {
        "exp" => Gain::Exponential,
        "lin" => Gain::Linear,
        other => other.parse()?,
    };

    let run = read_run(&run_path).with_context(|| format!("reading run {}", run_path.display()))?;
    let qrels = read_qrels(&qrels_path)
        .with_context(|| format!("reading qrels {}", qrels_path.display()))?;
    let report = evaluate_run(&run, &qrels, k, gain);

    if !report.run_only.is_empty() {
        eprintln!("warning: run-only query ids: {}", report.run_only.join(" "));
    }
    if !report.qrels_only.is_empty() {
        eprintln!(
            "warning: qrels-only query ids: {}",
            report.qrels_only.join(" ")
        );
    }
    if report.per_query.is_empty() {
        eprintln!("warning: no query ids shared between run and qrels");
    }

    let mut lines = String::new();
    if a.per_query {
        for (qid, v) in &report.per_query {
            lines.push_str(&format!("{qid} {:.2}\n", v * 100.0));
        }
    }
    lines.push_str(&format!(
        "nDCG@{k} x100 ({} gain, {} queries): {:.2}\n",
        report.gain,
        report.per_query.len(),
        report.mean * 100.0
    ));
    print!("{lines}");
    if let Some(out) = &a.out_report {
        std::fs::write(out, &lines)?;
        r.write_resolved(&resolved_path_for(out))?;
    }
    Ok(())
}

// --------------------------------------------------------------------- bench

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: compressed-listwise, pointwise-compressed, pointwise-textual
    #[arg(long)]
    systems: Option<String>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Checkpoint holding reranker parameters
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// docs.jsonl, used for retrieval and for textual candidates
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    topk: Option<usize>,
    /// Token length textual candidates are cycled or truncated to
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Cap on benched queries; 0 uses all
    #[arg(long)]
    max_queries: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let systems_raw = r.get(
        "systems",
        a.systems,
        "compressed-listwise,pointwise-textual".to_string(),
    )?;
    let index_path = r.req_path("index", a.index)?;
    let ckpt_path = r.req_path("checkpoint", a.checkpoint)?;
    let corpus_path = r.req_path("corpus", a.corpus)?;
    let queries_path = r.req_path("queries", a.queries)?;
    let topk = r.get("topk", a.topk, 50usize)?;
    let doc_len = r.get("doc-len", a.doc_len, 256usize)?;
    let repeats = r.get("repeats", a.repeats, 5usize)?;
    let warmup = r.get("warmup", a.warmup, 1usize)?;
    let cap = r.get("max-queries", a.max_queries, 0usize)?;
    let out_csv = r.req_path("out-csv", a.out_csv)?;
    if repeats < 3 {
        return Err(Error::Config(format!("repeats must be at least 3, got {repeats}")).into());
    }
    if warmup < 1 {
        return Err(Error::Config(format!("warmup must be at least 1, got {warmup}")).into());
    }

    let modes: Vec<Mode> = systems_raw
        .split(',')
        .map(|s| s.trim().parse::<Mode>())
        .collect::<rrk_core::Result<_>>()?;
    if modes.contains(&Mode::TextualListwise) {
        return Err(Error::Config(
            "textual-listwise is modeled analytically, not benched".into(),
        )
        .into());
    }

    let ckpt = open_checkpoint(&ckpt_path)?;
    let model = load_store(&ckpt, "reranker", &ckpt_path)?;
    let index = CompressedIndex::open(&index_path)?;
    let tok = Tokenizer::new(model.config.text_vocab());
    let docs = load_docs(&corpus_path, &tok)?;
    let bm25 = Bm25Index::build(&docs, Bm25Params::default())?;

    // Textual candidates at a fixed token length: cycle short docs, cut long.
    let textual: BTreeMap<String, Vec<u32>> = docs
        .iter()
        .map(|(id, toks)| {
            (
                id.clone(),
                toks.iter().copied().cycle().take(doc_len).collect(),
            )
        })
        .collect();

    let mut queries = corpus::read_queries_tsv(&queries_path)
        .with_context(|| format!("reading queries {}", queries_path.display()))?;
    if cap > 0 {
        queries.truncate(cap);
    }
    if queries.is_empty() {
        return Err(Error::Config(format!(
            "no queries to bench in {}",
            queries_path.display()
        ))
        .into());
    }
    let bench_queries: Vec<BenchQuery> = queries
        .iter()
        .map(|(qid, text)| {
            let tokens = tok.encode(text);
            let candidates = bm25
                .retrieve(&tokens, topk)
                .into_iter()
                .map(|(id, _)| id)
                .collect();
            BenchQuery {
                qid: qid.clone(),
                tokens,
                candidates,
            }
        })
        .collect();
    let q_len = bench_queries.first().map_or(1, |q| q.tokens.len().max(1));
    let l = model.config.mem_tokens;

    let specs: Vec<SystemSpec> = modes
        .iter()
        .map(|&mode| SystemSpec {
            name: mode.to_string(),
            mode,
            q_len,
            k: topk,
            l_or_d: if mode.is_compressed() { l } else { doc_len },
            run: match mode {
                Mode::CompressedListwise => {
                    let (model, index) = (&model, &index);
                    Box::new(move |q: &BenchQuery| {
                        let t = Instant::now();
                        let fetched = index.get_many(&q.candidates);
                        let fetch_s = t.elapsed().as_secs_f64();
                        let mut held = Vec::with_capacity(fetched.len());
                        for (id, doc) in fetched {
                            held.push(doc.ok_or(Error::DocNotFound(id))?);
                        }
                        let refs: Vec<_> = held.iter().collect();
                        let input = build_listwise_input(&model.config, &q.tokens, &refs)?;
                        score_listwise(model, &input)?;
                        Ok(fetch_s)
                    })
                }
                Mode::PointwiseCompressed => {
                    let (model, index) = (&model, &index);
                    Box::new(move |q: &BenchQuery| {
                        let t = Instant::now();
                        let fetched = index.get_many(&q.candidates);
                        let fetch_s = t.elapsed().as_secs_f64();
                        for (id, doc) in fetched {
                            let doc = doc.ok_or(Error::DocNotFound(id))?;
                            pointwise_score(model, &q.tokens, &doc)?;
                        }
                        Ok(fetch_s)
                    })
                }
                Mode::PointwiseTextual => {
                    let (model, textual) = (&model, &textual);
                    Box::new(move |q: &BenchQuery| {
                        for id in &q.candidates {
                            let toks = textual
                                .get(id)
                                .ok_or_else(|| Error::DocNotFound(id.clone()))?;
                            pointwise_score_textual(model, &q.tokens, toks)?;
                        }
                        Ok(0.0)
                    })
                }
                Mode::TextualListwise => unreachable!("rejected above"),
            },
        })
        .collect();

    let report = bench_latency(specs, &bench_queries, repeats, warmup);
    std::fs::write(&out_csv, report.to_csv())?;
    r.write_resolved(&resolved_path_for(&out_csv))?;

    println!(
        "benched {} queries, {} repeats (baseline {})",
        report.n_queries,
        report.repeats,
        report.baseline.as_deref().unwrap_or("none")
    );
    for s in &report.systems {
        match (&s.failure, s.mean_s_per_q, s.ratio_to_baseline) {
            (Some(why), _, _) => println!("{}: FAILED ({why})", s.name),
            (None, Some(mean), Some(ratio)) => println!(
                "{}: {:.6} s/query, ratio {:.2}, fetch {:.1}%",
                s.name,
                mean,
                ratio,
                s.fetch_share.unwrap_or(0.0) * 100.0
            ),
            _ => println!("{}: no measurement", s.name),
        }
    }
    println!("csv {}", out_csv.display());
    Ok(())
}
