//! Seeded toy corpus generator: templated passages over a topic vocabulary
//! with planted graded relevance, plus JSONL/TSV readers and writers.
//!
//! Layout: documents are grouped into topics. Every query belongs to one
//! topic and carries three private facet words; a document's hidden grade
//! for that query (0..=3) is the number of facet words planted into it.
//! Facets are planted twice each so lexical scoring separates the grades,
//! and every document and query shares one universal word so any query can
//! retrieve the whole corpus if its topic runs short.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seed_for;
use crate::trec::Qrels;

pub const DEFAULT_DOCS: usize = 2000;
pub const DEFAULT_TRAIN_QUERIES: usize = 200;
pub const DEFAULT_EVAL_QUERIES: usize = 50;
const DOCS_PER_TOPIC: usize = 50;
const NOISE_POOL: usize = 32;
const NOISE_PER_DOC: usize = 3;
const UNIVERSAL_WORD: &str = "passage";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub n_docs: usize,
    pub n_train_queries: usize,
    pub n_eval_queries: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_docs: DEFAULT_DOCS,
            n_train_queries: DEFAULT_TRAIN_QUERIES,
            n_eval_queries: DEFAULT_EVAL_QUERIES,
            seed: 42,
        }
    }
}

/// Generated corpus with its hidden relevance function. The qrels here are
/// the generator's ground truth; evaluation reads them back from disk.
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub documents: Vec<Document>,
    pub train_queries: Vec<(String, String)>,
    pub eval_queries: Vec<(String, String)>,
    pub qrels: Qrels,
}

impl ToyCorpus {
    pub fn rel(&self, qid: &str, doc_id: &str) -> u32 {
        self.qrels.grade(qid, doc_id)
    }

    pub fn all_queries(&self) -> impl Iterator<Item = &(String, String)> {
        self.train_queries.iter().chain(self.eval_queries.iter())
    }
}

fn grade_for_slot(rank: usize, n: usize) -> u32 {
    // Quartile-ish split 12/13/12/13 at n=50, scaled proportionally below.
    if rank < n * 12 / 50 {
        3
    } else if rank < n * 25 / 50 {
        2
    } else if rank < n * 37 / 50 {
        1
    } else {
        0
    }
}

pub fn generate(cfg: &GenConfig) -> Result<ToyCorpus> {
    if cfg.n_docs == 0 {
        return Err(Error::Config("corpus needs at least one document".into()));
    }
    let n_queries = cfg.n_train_queries + cfg.n_eval_queries;
    let n_topics = cfg.n_docs.div_ceil(DOCS_PER_TOPIC);
    let dw = cfg.n_docs.to_string().len().max(4);
    let qw = n_queries.to_string().len().max(4);

    let doc_id = |i: usize| format!("d{i:0dw$}");
    let qid = |i: usize| format!("q{i:0qw$}");

    // Topic membership: contiguous blocks of up to DOCS_PER_TOPIC docs.
    let topic_docs = |t: usize| {
        let start = t * DOCS_PER_TOPIC;
        start..(start + DOCS_PER_TOPIC).min(cfg.n_docs)
    };

    let mut queries = Vec::with_capacity(n_queries);
    let mut qrels = Qrels::default();
    // Facet tokens planted into each doc, keyed by doc index.
    let mut planted: Vec<Vec<String>> = vec![Vec::new(); cfg.n_docs];

    for i in 0..n_queries {
        let t = i % n_topics;
        let facets: Vec<String> = (0..3).map(|s| format!("q{i}f{s}")).collect();
        let text = format!(
            "t{t}b0 t{t}b1 {} {} {} {UNIVERSAL_WORD}",
            facets[0], facets[1], facets[2]
        );
        queries.push((qid(i), text));

        let members: Vec<usize> = topic_docs(t).collect();
        let mut slots = members.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, &format!("grades.{}", qid(i))));
        slots.shuffle(&mut rng);
        for (rank, &d) in slots.iter().enumerate() {
            let g = grade_for_slot(rank, members.len());
            qrels.insert(&qid(i), &doc_id(d), g);
            for facet in facets.iter().take(g as usize) {
                planted[d].push(facet.clone());
                planted[d].push(facet.clone());
            }
        }
    }

    let mut documents = Vec::with_capacity(cfg.n_docs);
    for d in 0..cfg.n_docs {
        let t = d / DOCS_PER_TOPIC;
        let mut words: Vec<String> = (0..4).map(|j| format!("t{t}b{j}")).collect();
        words.push(UNIVERSAL_WORD.to_string());
        words.extend(planted[d].iter().cloned());
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(cfg.seed, &format!("noise.{}", doc_id(d))));
        let mut pool: Vec<usize> = (0..NOISE_POOL).collect();
        pool.shuffle(&mut rng);
        for &w in pool.iter().take(NOISE_PER_DOC) {
            words.push(format!("filler{w}"));
        }
        documents.push(Document {
            id: doc_id(d),
            text: words.join(" "),
        });
    }

    let eval_queries = queries.split_off(cfg.n_train_queries);
    Ok(ToyCorpus {
        documents,
        train_queries: queries,
        eval_queries,
        qrels,
    })
}

pub fn write_documents_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("document serializes"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_documents_jsonl(path: &Path) -> Result<Vec<Document>> {
    let text = fs::read_to_string(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_queries_tsv(path: &Path, queries: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (qid, text) in queries {
        out.push_str(qid);
        out.push('\t');
        out.push_str(text);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_queries_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut queries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (qid, qtext) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: "expected qid<TAB>text".into(),
        })?;
        queries.push((qid.to_string(), qtext.to_string()));
    }
    Ok(queries)
}
