//! Training harness: training-set construction from the toy corpus, and the
//! joint compressor/reranker training loop with listwise (RankNet) or
//! pointwise (MSE) objectives.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compress::{compress, compress_graph, CompressedDoc, DEFAULT_MAX_DOC_LEN};
use crate::corpus::ToyCorpus;
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, Model, ModelConfig};
use crate::optim::{Adam, AdamConfig};
use crate::rerank::{
    listwise_scores_graph, mse_loss_graph, pointwise_score_graph, preference_pairs,
    ranknet_loss_graph, DEFAULT_TAU,
};
use crate::retrieve::Bm25Index;
use crate::rng::seed_for;
use crate::teacher::SyntheticTeacher;
use crate::tensor::Graph;
use crate::tokenizer::Tokenizer;

pub const DEFAULT_SAMPLE_DOCS: usize = 16;
pub const DEFAULT_POOL: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainingExample {
    pub qid: String,
    pub docs: Vec<String>,
    pub teacher_scores: Vec<f64>,
}

pub fn write_training_set(path: &Path, examples: &[TrainingExample]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex).expect("example serializes"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_training_set(path: &Path) -> Result<Vec<TrainingExample>> {
    let text = fs::read_to_string(path)?;
    let mut examples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            reason,
        };
        let ex: TrainingExample =
            serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if ex.docs.is_empty() || ex.docs.len() != ex.teacher_scores.len() {
            return Err(parse_err(format!(
                "{} docs but {} teacher scores",
                ex.docs.len(),
                ex.teacher_scores.len()
            )));
        }
        examples.push(ex);
    }
    Ok(examples)
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub n_docs: usize,
    pub pool: usize,
    pub seed: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            n_docs: DEFAULT_SAMPLE_DOCS,
            pool: DEFAULT_POOL,
            seed: 42,
        }
    }
}

fn sample_positions(seed: u64, qid: &str, pool_len: usize, n_docs: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &format!("sample.{qid}")));
    rand::seq::index::sample(&mut rng, pool_len, n_docs).into_vec()
}

/// Builds training examples: retrieve a candidate pool per training query,
/// teacher-score it, and sample `n_docs` candidates without replacement.
/// Queries with pools thinner than `n_docs` are skipped with a warning.
pub fn build_training_set(
    corpus: &ToyCorpus,
    index: &Bm25Index,
    tokenizer: &Tokenizer,
    teacher: &SyntheticTeacher,
    n_queries: usize,
    opts: &BuildOptions,
) -> (Vec<TrainingExample>, Vec<String>) {
    assert!(opts.pool >= opts.n_docs, "pool smaller than sample size");
    let mut examples = Vec::new();
    let mut warnings = Vec::new();
    for (qid, text) in corpus.train_queries.iter().take(n_queries) {
        let pool = index.retrieve(&tokenizer.encode(text), opts.pool);
        if pool.len() < opts.n_docs {
            warnings.push(format!(
                "skipping {qid}: {} candidates, need {}",
                pool.len(),
                opts.n_docs
            ));
            continue;
        }
        let picks = sample_positions(opts.seed, qid, pool.len(), opts.n_docs);
        let docs: Vec<String> = picks.iter().map(|&i| pool[i].0.clone()).collect();
        let teacher_scores: Vec<f64> = docs
            .iter()
            .map(|d| teacher.score(&corpus.qrels, qid, d))
            .collect();
        examples.push(TrainingExample {
            qid: qid.clone(),
            docs,
            teacher_scores,
        });
    }
    (examples, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Listwise,
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorMode {
    Frozen,
    FromScratch,
    Finetune,
}

impl FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "listwise" => Ok(TrainMode::Listwise),
            "pointwise" => Ok(TrainMode::Pointwise),
            other => Err(Error::Config(format!("unknown train mode {other}"))),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Listwise => "listwise",
            TrainMode::Pointwise => "pointwise",
        })
    }
}

impl FromStr for CompressorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(CompressorMode::Frozen),
            "scratch" | "from-scratch" => Ok(CompressorMode::FromScratch),
            "finetune" => Ok(CompressorMode::Finetune),
            other => Err(Error::Config(format!("unknown compressor mode {other}"))),
        }
    }
}

impl fmt::Display for CompressorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompressorMode::Frozen => "frozen",
            CompressorMode::FromScratch => "from-scratch",
            CompressorMode::Finetune => "finetune",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Architecture for fresh initialization; loaded checkpoints carry their
    /// own and this field is ignored for frozen/finetune modes.
    pub model: ModelConfig,
    pub mode: TrainMode,
    pub compressor_mode: CompressorMode,
    pub lr: f64,
    pub epochs: usize,
    pub grad_accum: usize,
    pub tau: f64,
    pub max_doc_len: usize,
    pub seed: u64,
    pub init_checkpoint: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub loss_csv: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            mode: TrainMode::Listwise,
            compressor_mode: CompressorMode::FromScratch,
            lr: 1e-3,
            epochs: 2,
            grad_accum: 4,
            tau: DEFAULT_TAU,
            max_doc_len: DEFAULT_MAX_DOC_LEN,
            seed: 42,
            init_checkpoint: None,
            checkpoint_dir: None,
            loss_csv: None,
        }
    }
}

/// Tokenized inputs the trainer consumes.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub doc_tokens: BTreeMap<String, Vec<u32>>,
    pub query_tokens: BTreeMap<String, Vec<u32>>,
    pub examples: Vec<TrainingExample>,
}

#[derive(Debug)]
pub struct TrainReport {
    /// Micro-steps executed in this call (one per example visit).
    pub steps: u64,
    /// (global step, unscaled loss) per micro-step.
    pub losses: Vec<(u64, f64)>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainReport {
    pub fn mean_loss_over(&self, range: std::ops::Range<usize>) -> f64 {
        let slice = &self.losses[range];
        slice.iter().map(|(_, l)| *l).sum::<f64>() / slice.len() as f64
    }
}

/// Instantiates the compressor/reranker pair for a training run. Frozen and
/// finetune modes require an initial checkpoint; finetune freezes the
/// compressor backbone and trains low-rank adapters on it instead.
pub fn setup_models(cfg: &TrainConfig) -> Result<(Model<f32>, Model<f32>, u64)> {
    match cfg.compressor_mode {
        CompressorMode::FromScratch => {
            // One backbone init for both models. Embedding rows the gradients
            // never touch stay bitwise equal across the pair, so token
            // matching keeps working for words first seen at query time.
            let init = seed_for(cfg.seed, "init.backbone");
            let compressor = Model::new(cfg.model.clone(), init)?;
            let reranker = Model::new(cfg.model.clone(), init)?;
            Ok((compressor, reranker, 0))
        }
        CompressorMode::Frozen | CompressorMode::Finetune => {
            let path = cfg
                .init_checkpoint
                .as_ref()
                .ok_or(Error::MissingCheckpoint)?;
            let ckpt = load_checkpoint(path)?;
            let mut compressor =
                Model::from_parts(ckpt.config.clone(), ckpt.extract("compressor")?)?;
            let reranker = Model::from_parts(ckpt.config.clone(), ckpt.extract("reranker")?)?;
            match cfg.compressor_mode {
                CompressorMode::Frozen => compressor.params.set_requires_grad_all(false),
                CompressorMode::Finetune => {
                    compressor.params.set_requires_grad_all(false);
                    if compressor.adapters().is_empty() {
                        compressor.attach_default_adapters()?;
                    } else {
                        // Resuming an adapter checkpoint: re-open the adapter
                        // weights, keep the backbone frozen.
                        for target in compressor.adapters().keys().cloned().collect::<Vec<_>>() {
                            compressor
                                .params
                                .get_mut(&format!("{target}.lora_a"))?
                                .requires_grad = true;
                            compressor
                                .params
                                .get_mut(&format!("{target}.lora_b"))?
                                .requires_grad = true;
                        }
                    }
                }
                CompressorMode::FromScratch => unreachable!(),
            }
            Ok((compressor, reranker, ckpt.step))
        }
    }
}

fn compressed_cache(
    compressor: &Model<f32>,
    data: &TrainData,
    max_doc_len: usize,
) -> Result<BTreeMap<String, CompressedDoc>> {
    let mut cache = BTreeMap::new();
    for ex in &data.examples {
        for doc in &ex.docs {
            if cache.contains_key(doc) {
                continue;
            }
            let tokens = data
                .doc_tokens
                .get(doc)
                .ok_or_else(|| Error::DocNotFound(doc.clone()))?;
            cache.insert(doc.clone(), compress(compressor, doc, tokens, max_doc_len)?);
        }
    }
    Ok(cache)
}

/// Runs the training loop. Gradients accumulate over `grad_accum` examples
/// per optimizer step (loss scaled accordingly; the logged loss is not).
/// A checkpoint lands after every epoch, plus a `latest.ckpt` copy.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData,
    compressor: &mut Model<f32>,
    reranker: &mut Model<f32>,
    start_step: u64,
) -> Result<TrainReport> {
    if data.examples.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    assert!(cfg.grad_accum >= 1, "grad_accum must be at least 1");
    let frozen = cfg.compressor_mode == CompressorMode::Frozen;
    let cache = if frozen {
        compressed_cache(compressor, data, cfg.max_doc_len)?
    } else {
        BTreeMap::new()
    };

    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut report = TrainReport {
        steps: 0,
        losses: Vec::new(),
        checkpoints: Vec::new(),
    };
    let mut step = start_step;
    let mut pending = 0usize;

    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, &format!("epoch.{epoch}")));
        order.shuffle(&mut rng);

        for &idx in &order {
            let ex = &data.examples[idx];
            if ex.teacher_scores.iter().any(|s| !s.is_finite()) {
                // The loss would be non-finite; catch it before the graph.
                return Err(Error::NonFiniteLoss {
                    step: step as usize,
                    example: ex.qid.clone(),
                });
            }
            let q = data
                .query_tokens
                .get(&ex.qid)
                .ok_or_else(|| Error::Invalid(format!("no tokens for query {}", ex.qid)))?;

            let mut g = Graph::new();
            let mut blocks = Vec::with_capacity(ex.docs.len());
            for doc in &ex.docs {
                if frozen {
                    blocks.push(g.constant(cache[doc].embeddings.clone()));
                } else {
                    let tokens = data
                        .doc_tokens
                        .get(doc)
                        .ok_or_else(|| Error::DocNotFound(doc.clone()))?;
                    blocks.push(compress_graph(&mut g, compressor, tokens, cfg.max_doc_len)?);
                }
            }
            let loss = match cfg.mode {
                TrainMode::Listwise => {
                    let scores = listwise_scores_graph(&mut g, reranker, q, &blocks)?;
                    let pairs = preference_pairs(&ex.teacher_scores);
                    ranknet_loss_graph(&mut g, &scores, &pairs, cfg.tau)?
                }
                TrainMode::Pointwise => {
                    let mut scores = Vec::with_capacity(blocks.len());
                    for &b in &blocks {
                        scores.push(pointwise_score_graph(&mut g, reranker, q, Some(b), None)?);
                    }
                    mse_loss_graph(&mut g, &scores, &ex.teacher_scores)?
                }
            };
            let loss_val = g.value(loss).data[0] as f64;
            if !loss_val.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: step as usize,
                    example: ex.qid.clone(),
                });
            }
            let scaled = g.scale(loss, 1.0 / cfg.grad_accum as f64)?;
            if frozen {
                g.backward(scaled, &mut [&mut reranker.params])?;
            } else {
                g.backward(scaled, &mut [&mut compressor.params, &mut reranker.params])?;
            }
            report.losses.push((step, loss_val));
            step += 1;
            report.steps += 1;
            pending += 1;
            if pending == cfg.grad_accum {
                opt.step(&mut [
                    ("compressor", &mut compressor.params),
                    ("reranker", &mut reranker.params),
                ]);
                compressor.params.zero_grad();
                reranker.params.zero_grad();
                pending = 0;
            }
        }
        if pending > 0 {
            opt.step(&mut [
                ("compressor", &mut compressor.params),
                ("reranker", &mut reranker.params),
            ]);
            compressor.params.zero_grad();
            reranker.params.zero_grad();
            pending = 0;
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            let mut ckpt = Checkpoint::new(compressor.config.clone(), step);
            ckpt.add_store("compressor", &compressor.params);
            ckpt.add_store("reranker", &reranker.params);
            let path = dir.join(format!("epoch-{:02}.ckpt", epoch + 1));
            save_checkpoint(&path, &ckpt)?;
            fs::copy(&path, dir.join("latest.ckpt"))?;
            report.checkpoints.push(path);
        }
    }

    if let Some(csv) = &cfg.loss_csv {
        let mut out = String::from("step,loss\n");
        for (s, l) in &report.losses {
            out.push_str(&format!("{s},{l}\n"));
        }
        fs::write(csv, out)?;
    }
    Ok(report)
}

/// Convenience wrapper: set up the model pair, train, return both with the
/// report.
pub fn run_training(
    cfg: &TrainConfig,
    data: &TrainData,
) -> Result<(Model<f32>, Model<f32>, TrainReport)> {
    let (mut compressor, mut reranker, start) = setup_models(cfg)?;
    let report = train(cfg, data, &mut compressor, &mut reranker, start)?;
    Ok((compressor, reranker, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::splitmix64;

    fn micro_cfg() -> ModelConfig {
        ModelConfig::micro(3)
    }

    /// Synthetic training set: `n` queries, each with its own `k` docs and
    /// strictly decreasing teacher scores.
    fn toy_data(n: usize, k: usize, cfg: &ModelConfig) -> TrainData {
        let text_vocab = cfg.text_vocab() as u64;
        let mut data = TrainData::default();
        let mut state = 99u64;
        let mut next = |hi: u64| {
            state = splitmix64(state);
            (state % hi) as u32
        };
        for qi in 0..n {
            let qid = format!("q{qi:03}");
            data.query_tokens
                .insert(qid.clone(), (0..3).map(|_| next(text_vocab)).collect());
            let mut docs = Vec::new();
            for di in 0..k {
                let id = format!("d{:04}", qi * k + di);
                data.doc_tokens
                    .insert(id.clone(), (0..5).map(|_| next(text_vocab)).collect());
                docs.push(id);
            }
            let teacher_scores = (0..k).map(|d| (k - d) as f64).collect();
            data.examples.push(TrainingExample {
                qid,
                docs,
                teacher_scores,
            });
        }
        data
    }

    #[test]
    fn training_set_construction_is_deterministic() {
        use crate::corpus::{generate, GenConfig};
        let cfgc = GenConfig {
            n_docs: 150,
            n_train_queries: 8,
            n_eval_queries: 2,
            seed: 3,
        };
        let corpus = generate(&cfgc).unwrap();
        let tok = Tokenizer::new(4086);
        let docs: Vec<(String, Vec<u32>)> = corpus
            .documents
            .iter()
            .map(|d| (d.id.clone(), tok.encode(&d.text)))
            .collect();
        let index = Bm25Index::build(&docs, Default::default()).unwrap();
        let teacher = SyntheticTeacher::new(3);
        let opts = BuildOptions::default();
        let (a, wa) = build_training_set(&corpus, &index, &tok, &teacher, 8, &opts);
        let (b, wb) = build_training_set(&corpus, &index, &tok, &teacher, 8, &opts);
        assert_eq!(a, b);
        assert!(wa.is_empty() && wb.is_empty());
        assert_eq!(a.len(), 8);
        for ex in &a {
            assert_eq!(ex.docs.len(), 16);
            assert_eq!(ex.teacher_scores.len(), 16);
        }
    }

    #[test]
    fn sampling_the_whole_pool_returns_every_position() {
        let mut picks = sample_positions(1, "q", 16, 16);
        picks.sort_unstable();
        assert_eq!(picks, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn pool_positions_are_sampled_uniformly() {
        let draws = 10_000usize;
        let mut counts = vec![0usize; 50];
        for i in 0..draws {
            for p in sample_positions(7, &format!("h{i}"), 50, 16) {
                counts[p] += 1;
            }
        }
        let expected = 16.0 / 50.0;
        for (p, c) in counts.iter().enumerate() {
            let freq = *c as f64 / draws as f64;
            assert!(
                (freq - expected).abs() <= 0.02,
                "position {p} sampled at {freq:.4}, expected {expected}"
            );
        }
    }

    #[test]
    fn thin_pools_are_skipped_with_a_warning() {
        use crate::corpus::{generate, GenConfig};
        let corpus = generate(&GenConfig {
            n_docs: 60,
            n_train_queries: 2,
            n_eval_queries: 0,
            seed: 5,
        })
        .unwrap();
        let tok = Tokenizer::new(4086);
        // Index only 10 documents so every pool is thinner than n_docs.
        let docs: Vec<(String, Vec<u32>)> = corpus
            .documents
            .iter()
            .take(10)
            .map(|d| (d.id.clone(), tok.encode(&d.text)))
            .collect();
        let index = Bm25Index::build(&docs, Default::default()).unwrap();
        let teacher = SyntheticTeacher::new(5);
        let (examples, warnings) =
            build_training_set(&corpus, &index, &tok, &teacher, 2, &BuildOptions::default());
        assert!(examples.is_empty());
        assert_eq!(warnings.len(), 2);
        assert!(warnings[0].contains("skipping"));
    }

    #[test]
    fn training_set_jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.jsonl");
        let examples = vec![TrainingExample {
            qid: "q1".into(),
            docs: vec!["a".into(), "b".into()],
            teacher_scores: vec![2.5, 0.5],
        }];
        write_training_set(&p, &examples).unwrap();
        assert_eq!(read_training_set(&p).unwrap(), examples);

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(
            &bad,
            "{\"qid\":\"q\",\"docs\":[\"a\"],\"teacher_scores\":[1.0,2.0]}\n",
        )
        .unwrap();
        match read_training_set(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn listwise_overfits_a_small_set() {
        let model = micro_cfg();
        let data = toy_data(32, 4, &model);
        let mut cfg = TrainConfig::new(model);
        cfg.lr = 3e-3;
        cfg.epochs = 10;
        cfg.grad_accum = 1;
        cfg.seed = 17;
        let (_, _, report) = run_training(&cfg, &data).unwrap();
        assert_eq!(report.steps, 320);
        let initial = report.mean_loss_over(0..32);
        let final_ = report.mean_loss_over(288..320);
        assert!(
            final_ < 0.25 * initial,
            "loss went {initial:.4} -> {final_:.4}"
        );
    }

    #[test]
    fn zero_lr_changes_nothing_bitwise() {
        let model = micro_cfg();
        let data = toy_data(4, 3, &model);
        let mut cfg = TrainConfig::new(model);
        cfg.lr = 0.0;
        cfg.epochs = 1;
        let (mut compressor, mut reranker, start) = setup_models(&cfg).unwrap();
        let snap = |m: &Model<f32>| -> Vec<(String, Vec<u32>)> {
            m.params
                .iter()
                .map(|(n, p)| (n.clone(), p.value.data.iter().map(|v| v.to_bits()).collect()))
                .collect()
        };
        let (c0, r0) = (snap(&compressor), snap(&reranker));
        train(&cfg, &data, &mut compressor, &mut reranker, start).unwrap();
        assert_eq!(snap(&compressor), c0);
        assert_eq!(snap(&reranker), r0);
    }

    #[test]
    fn frozen_compressor_keeps_its_bits_and_gets_no_gradients() {
        let dir = tempfile::tempdir().unwrap();
        let model = micro_cfg();
        let data = toy_data(6, 3, &model);

        let mut pre = TrainConfig::new(model.clone());
        pre.epochs = 1;
        pre.checkpoint_dir = Some(dir.path().to_path_buf());
        run_training(&pre, &data).unwrap();

        let mut cfg = TrainConfig::new(model);
        cfg.compressor_mode = CompressorMode::Frozen;
        cfg.init_checkpoint = Some(dir.path().join("latest.ckpt"));
        cfg.epochs = 1;
        let (mut compressor, mut reranker, start) = setup_models(&cfg).unwrap();
        let before: Vec<u32> = compressor
            .params
            .iter()
            .flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits()))
            .collect();
        let r_before: Vec<u32> = reranker
            .params
            .iter()
            .flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits()))
            .collect();
        train(&cfg, &data, &mut compressor, &mut reranker, start).unwrap();
        let after: Vec<u32> = compressor
            .params
            .iter()
            .flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits()))
            .collect();
        let r_after: Vec<u32> = reranker
            .params
            .iter()
            .flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits()))
            .collect();
        assert_eq!(before, after, "frozen compressor must not move");
        assert_ne!(r_before, r_after, "reranker must still learn");
        assert!(compressor.params.iter().all(|(_, p)| p.grad.is_none()));
    }

    #[test]
    fn finetune_trains_adapters_but_not_the_backbone() {
        let dir = tempfile::tempdir().unwrap();
        let model = micro_cfg();
        let data = toy_data(6, 3, &model);

        let mut pre = TrainConfig::new(model.clone());
        pre.epochs = 1;
        pre.checkpoint_dir = Some(dir.path().to_path_buf());
        run_training(&pre, &data).unwrap();

        let mut cfg = TrainConfig::new(model);
        cfg.compressor_mode = CompressorMode::Finetune;
        cfg.init_checkpoint = Some(dir.path().join("latest.ckpt"));
        cfg.epochs = 1;
        let (mut compressor, mut reranker, start) = setup_models(&cfg).unwrap();
        assert!(!compressor.adapters().is_empty());
        let base_before: Vec<u32> = compressor
            .params
            .iter()
            .filter(|(n, _)| !n.contains(".lora_"))
            .flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits()))
            .collect();
        train(&cfg, &data, &mut compressor, &mut reranker, start).unwrap();
        let base_after: Vec<u32> = compressor
            .params
            .iter()
            .filter(|(n, _)| !n.contains(".lora_"))
            .flat_map(|(_, p)| p.value.data.iter().map(|v| v.to_bits()))
            .collect();
        assert_eq!(base_before, base_after, "backbone stays frozen");
        let b_moved = compressor
            .params
            .iter()
            .filter(|(n, _)| n.ends_with(".lora_b"))
            .any(|(_, p)| p.value.data.iter().any(|&v| v != 0.0));
        assert!(b_moved, "adapter B matrices must leave zero");
    }

    #[test]
    fn checkpoints_resume_with_continued_step_count() {
        let dir = tempfile::tempdir().unwrap();
        let model = micro_cfg();
        let data = toy_data(5, 3, &model);

        let mut cfg = TrainConfig::new(model.clone());
        cfg.epochs = 1;
        cfg.checkpoint_dir = Some(dir.path().to_path_buf());
        cfg.loss_csv = Some(dir.path().join("loss.csv"));
        run_training(&cfg, &data).unwrap();
        let first = load_checkpoint(&dir.path().join("latest.ckpt")).unwrap();
        assert_eq!(first.step, 5);

        let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
        assert!(csv.starts_with("step,loss\n"));
        assert_eq!(csv.lines().count(), 6);

        let mut resume = TrainConfig::new(model);
        resume.compressor_mode = CompressorMode::Finetune;
        resume.init_checkpoint = Some(dir.path().join("latest.ckpt"));
        resume.checkpoint_dir = Some(dir.path().join("second"));
        resume.epochs = 1;
        run_training(&resume, &data).unwrap();
        let second = load_checkpoint(&dir.path().join("second/latest.ckpt")).unwrap();
        assert_eq!(second.step, 10);
    }

    #[test]
    fn nonfinite_teacher_scores_abort_with_the_example_id() {
        let model = micro_cfg();
        let mut data = toy_data(2, 3, &model);
        data.examples[1].teacher_scores[0] = f64::NAN;
        let mut cfg = TrainConfig::new(model);
        cfg.mode = TrainMode::Pointwise;
        cfg.epochs = 1;
        match run_training(&cfg, &data) {
            Err(Error::NonFiniteLoss { example, .. }) => assert_eq!(example, "q001"),
            other => panic!("expected non-finite loss abort, got {other:?}"),
        }
    }

    #[test]
    fn mixed_scale_teachers_hurt_pointwise_more_than_listwise() {
        let model = micro_cfg();
        // Same queries and docs scored by two teachers on different scales:
        // identical orderings, incompatible regression targets.
        let base = toy_data(8, 4, &model);
        let mut mixed = base.clone();
        for (i, ex) in mixed.examples.iter_mut().enumerate() {
            if i % 2 == 1 {
                for s in ex.teacher_scores.iter_mut() {
                    *s = 5.0 * *s + 2.0;
                }
            }
        }
        // Duplicate each query's example under both teachers so the same
        // (query, doc) pair carries two different pointwise targets.
        let mut both = base.clone();
        for ex in &mixed.examples {
            both.examples.push(ex.clone());
        }

        // Relative improvement (final/initial loss) is scale-free, so the
        // two objectives can be compared on it.
        let ratio = |mode: TrainMode, data: &TrainData| {
            let mut cfg = TrainConfig::new(micro_cfg());
            cfg.mode = mode;
            cfg.lr = 1e-3;
            cfg.epochs = 10;
            cfg.grad_accum = 1;
            let (_, _, rep) = run_training(&cfg, data).unwrap();
            let n = rep.losses.len();
            let m = data.examples.len();
            rep.mean_loss_over(n - m..n) / rep.mean_loss_over(0..m)
        };

        let list_mixed = ratio(TrainMode::Listwise, &both);
        let point_single = ratio(TrainMode::Pointwise, &base);
        let point_mixed = ratio(TrainMode::Pointwise, &both);

        // Listwise only sees orderings, which agree between the teachers.
        assert!(list_mixed < 0.7, "listwise stalled under mixing: {list_mixed:.3}");
        // Pointwise faces contradictory targets: a fixed gap cannot vanish.
        assert!(
            point_mixed > 1.5 * point_single,
            "mixed ratio {point_mixed:.3} vs single ratio {point_single:.3}"
        );
    }
}
