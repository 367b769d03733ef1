//! First-stage lexical retrieval: BM25 over hashed token ids with the
//! Lucene-style idf. Deterministic scoring and doc-id tie-breaking make the
//! candidate pools reproducible.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lens: Vec<usize>,
    avg_len: f64,
    /// term -> (doc index, term frequency), doc indices ascending.
    postings: BTreeMap<u32, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build(docs: &[(String, Vec<u32>)], params: Bm25Params) -> Result<Self> {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.sort_by(|&a, &b| docs[a].0.cmp(&docs[b].0));
        for w in order.windows(2) {
            if docs[w[0]].0 == docs[w[1]].0 {
                return Err(Error::DuplicateDocId(docs[w[0]].0.clone()));
            }
        }
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut postings: BTreeMap<u32, Vec<(usize, u32)>> = BTreeMap::new();
        for (idx, &src) in order.iter().enumerate() {
            let (id, tokens) = &docs[src];
            doc_ids.push(id.clone());
            doc_lens.push(tokens.len());
            let mut tf: BTreeMap<u32, u32> = BTreeMap::new();
            for &t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (t, f) in tf {
                postings.entry(t).or_default().push((idx, f));
            }
        }
        let total: usize = doc_lens.iter().sum();
        let avg_len = if doc_lens.is_empty() {
            0.0
        } else {
            total as f64 / doc_lens.len() as f64
        };
        Ok(Bm25Index {
            params,
            doc_ids,
            doc_lens,
            avg_len,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        (((n - df as f64 + 0.5) / (df as f64 + 0.5)) + 1.0).ln()
    }

    /// Top `top_n` documents matching at least one query term, scored by
    /// BM25 and ordered by descending score with doc_id tie-break. A query
    /// with no indexed terms yields an empty result.
    pub fn retrieve(&self, query_tokens: &[u32], top_n: usize) -> Vec<(String, f64)> {
        let mut unique_terms: Vec<u32> = query_tokens.to_vec();
        unique_terms.sort_unstable();
        unique_terms.dedup();

        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        let Bm25Params { k1, b } = self.params;
        for t in unique_terms {
            let Some(plist) = self.postings.get(&t) else { continue };
            let idf = self.idf(plist.len());
            for &(doc, tf) in plist {
                let len_norm = 1.0 - b + b * self.doc_lens[doc] as f64 / self.avg_len;
                let tf = tf as f64;
                let contrib = idf * tf * (k1 + 1.0) / (tf + k1 * len_norm);
                *scores.entry(doc).or_insert(0.0) += contrib;
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("bm25 scores are finite")
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        ranked.truncate(top_n);
        ranked
            .into_iter()
            .map(|(doc, s)| (self.doc_ids[doc].clone(), s))
            .collect()
    }
}
