//! First-stage retrieval feeding compressed listwise reranking: BM25 picks
//! candidates, their embeddings come out of the index, one forward pass
//! scores them all, and the results land in TREC run shape.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::index::CompressedIndex;
use crate::model::Model;
use crate::rerank::{build_listwise_input, score_listwise};
use crate::retrieve::Bm25Index;
use crate::tokenizer::Tokenizer;
use crate::trec::{RankedList, RunData};

pub struct RerankOutcome {
    pub run: RunData,
    /// One line per dropped doc or skipped query.
    pub warnings: Vec<String>,
}

/// Reranks each query's BM25 top-k with the compressed listwise scorer.
/// Candidates missing from the index are dropped with a warning; a query
/// left with no scorable candidates yields an empty result list.
pub fn rerank_queries(
    model: &Model<f32>,
    index: &CompressedIndex,
    bm25: &Bm25Index,
    tokenizer: &Tokenizer,
    queries: &[(String, String)],
    top_k: usize,
    tag: &str,
) -> Result<RerankOutcome> {
    assert!(top_k >= 1, "top_k must be positive");
    let mut results: BTreeMap<String, RankedList> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (qid, text) in queries {
        let tokens = tokenizer.encode(text);
        let candidates = bm25.retrieve(&tokens, top_k);
        let ids: Vec<String> = candidates.into_iter().map(|(id, _)| id).collect();
        let mut docs = Vec::new();
        for (id, doc) in index.get_many(&ids) {
            match doc {
                Some(d) => docs.push(d),
                None => warnings.push(format!("{qid}: dropping {id}, not in index")),
            }
        }
        if docs.is_empty() {
            warnings.push(format!("{qid}: no scorable candidates"));
            results.insert(qid.clone(), Vec::new());
            continue;
        }
        let refs: Vec<_> = docs.iter().collect();
        let input = build_listwise_input(&model.config, &tokens, &refs)?;
        let scored = score_listwise(model, &input)?;
        results.insert(
            qid.clone(),
            scored
                .entries
                .into_iter()
                .map(|(id, s)| (id, s as f64))
                .collect(),
        );
    }
    Ok(RerankOutcome {
        run: RunData {
            results,
            tag: tag.to_string(),
        },
        warnings,
    })
}
