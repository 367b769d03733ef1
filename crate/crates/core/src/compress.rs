//! Document compression: a document's tokens are followed by the reserved
//! memory tokens MEM_1..MEM_l and run through the compressor backbone; the
//! final hidden states at the memory positions become the document's l x
//! d_model representation.

use crate::error::{Error, Result};
use crate::model::{InputItem, Model};
use crate::tensor::{Graph, Scalar, Tensor, Var};

pub const DEFAULT_MAX_DOC_LEN: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedDoc {
    pub doc_id: String,
    /// l x d_model, row s is the hidden state at MEM_s.
    pub embeddings: Tensor<f32>,
    /// Token count before truncation; unknown when loaded from an index.
    pub source_len: Option<usize>,
}

/// Keeps the first `max_doc_len` tokens.
pub fn truncate(tokens: &[u32], max_doc_len: usize) -> &[u32] {
    assert!(max_doc_len >= 1, "max_doc_len must be at least 1");
    &tokens[..tokens.len().min(max_doc_len)]
}

/// Ratio of the document budget to the memory slots it compresses into.
pub fn compression_factor(max_doc_len: usize, mem_tokens: usize) -> f64 {
    assert!(mem_tokens >= 1, "mem_tokens must be at least 1");
    max_doc_len as f64 / mem_tokens as f64
}

/// Compresses one tokenized document.
pub fn compress(
    model: &Model<f32>,
    doc_id: &str,
    tokens: &[u32],
    max_doc_len: usize,
) -> Result<CompressedDoc> {
    if doc_id.is_empty() {
        return Err(Error::Invalid("doc id must not be empty".into()));
    }
    if tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let cfg = &model.config;
    let kept = truncate(tokens, max_doc_len);
    let total = kept.len() + cfg.mem_tokens;
    if total > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: total,
            max: cfg.max_seq_len,
        });
    }
    let mut items: Vec<InputItem<f32>> = Vec::with_capacity(total);
    items.extend(kept.iter().map(|&t| InputItem::Token(t)));
    items.extend((0..cfg.mem_tokens).map(|s| InputItem::Token(cfg.mem_id(s))));
    let hidden = model.forward(&items)?;
    let d = cfg.d_model;
    let start = kept.len() * d;
    let embeddings = Tensor::new(
        cfg.mem_tokens,
        d,
        hidden.data[start..start + cfg.mem_tokens * d].to_vec(),
    );
    debug_assert!(embeddings.is_all_finite());
    Ok(CompressedDoc {
        doc_id: doc_id.to_string(),
        embeddings,
        source_len: Some(tokens.len()),
    })
}

/// In-graph compression: returns the memory-token block as a live node so
/// gradients can flow back into the compressor during joint training.
pub fn compress_graph<F: Scalar>(
    g: &mut Graph<F>,
    model: &Model<F>,
    tokens: &[u32],
    max_doc_len: usize,
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let cfg = &model.config;
    let kept = truncate(tokens, max_doc_len);
    let total = kept.len() + cfg.mem_tokens;
    if total > cfg.max_seq_len {
        return Err(Error::SequenceTooLong {
            len: total,
            max: cfg.max_seq_len,
        });
    }
    let mut items: Vec<InputItem<F>> = Vec::with_capacity(total);
    items.extend(kept.iter().map(|&t| InputItem::Token(t)));
    items.extend((0..cfg.mem_tokens).map(|s| InputItem::Token(cfg.mem_id(s))));
    let hidden = model.forward_graph(g, &items)?;
    g.slice_rows(hidden, kept.len(), cfg.mem_tokens)
}

/// Number of worker threads for corpus compression: RRK_THREADS when set,
/// otherwise the machine's parallelism, never more than the item count.
pub fn worker_threads(n_items: usize) -> usize {
    let cap = std::env::var("RRK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    cap.max(1).min(n_items.max(1))
}

/// Compresses a corpus with `threads` workers. Output is sorted by doc_id
/// and identical for any thread count.
pub fn compress_corpus(
    model: &Model<f32>,
    docs: &[(String, Vec<u32>)],
    max_doc_len: usize,
    threads: usize,
) -> Result<Vec<CompressedDoc>> {
    let mut sorted: Vec<&(String, Vec<u32>)> = docs.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::DuplicateDocId(pair[0].0.clone()));
        }
    }
    let threads = threads.clamp(1, sorted.len().max(1));
    if threads <= 1 {
        return sorted
            .iter()
            .map(|(id, toks)| compress(model, id, toks, max_doc_len))
            .collect();
    }
    let chunk = sorted.len().div_ceil(threads);
    let results: Vec<Result<Vec<CompressedDoc>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sorted
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|(id, toks)| compress(model, id, toks, max_doc_len))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut out = Vec::with_capacity(sorted.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
