//! On-disk index of compressed documents: a sorted flat file served by
//! binary search.
//!
//! Layout (all little-endian):
//!   magic "RRKIDX1" | version u32 | l u32 | d_model u32 | dtype u8 |
//!   doc_count u64 | records sorted by doc_id, each
//!   {id_len u32, id bytes, l*d_model values}.
//! Values are f32 (dtype 0) or f16 (dtype 1); scoring always widens to f32.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use half::f16;

use crate::compress::{compress_corpus, CompressedDoc};
use crate::error::{Error, Result};
use crate::fileio::{put_f32, put_u16, put_u32, put_u64, Reader};
use crate::model::Model;
use crate::tensor::Tensor;

const MAGIC: &[u8; 7] = b"RRKIDX1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexDtype {
    F32,
    F16,
}

impl IndexDtype {
    fn code(self) -> u8 {
        match self {
            IndexDtype::F32 => 0,
            IndexDtype::F16 => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(IndexDtype::F32),
            1 => Some(IndexDtype::F16),
            _ => None,
        }
    }

    pub fn bytes_per_value(self) -> usize {
        match self {
            IndexDtype::F32 => 4,
            IndexDtype::F16 => 2,
        }
    }
}

impl std::str::FromStr for IndexDtype {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(IndexDtype::F32),
            "f16" => Ok(IndexDtype::F16),
            other => Err(Error::Config(format!("unknown index dtype {other}"))),
        }
    }
}

impl std::fmt::Display for IndexDtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IndexDtype::F32 => "f32",
            IndexDtype::F16 => "f16",
        })
    }
}

/// Serializes compressed documents (already sorted by id) to index bytes.
pub fn encode_index(
    docs: &[CompressedDoc],
    mem_tokens: usize,
    d_model: usize,
    dtype: IndexDtype,
) -> Result<Vec<u8>> {
    for pair in docs.windows(2) {
        match pair[0].doc_id.cmp(&pair[1].doc_id) {
            Ordering::Less => {}
            Ordering::Equal => return Err(Error::DuplicateDocId(pair[0].doc_id.clone())),
            Ordering::Greater => {
                return Err(Error::Invalid(format!(
                    "documents not sorted: {} after {}",
                    pair[1].doc_id, pair[0].doc_id
                )))
            }
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, mem_tokens as u32);
    put_u32(&mut out, d_model as u32);
    out.push(dtype.code());
    put_u64(&mut out, docs.len() as u64);
    for doc in docs {
        if doc.embeddings.rows != mem_tokens || doc.embeddings.cols != d_model {
            return Err(Error::Invalid(format!(
                "document {} is {}x{}, index wants {}x{}",
                doc.doc_id, doc.embeddings.rows, doc.embeddings.cols, mem_tokens, d_model
            )));
        }
        put_u32(&mut out, doc.doc_id.len() as u32);
        out.extend_from_slice(doc.doc_id.as_bytes());
        for &v in &doc.embeddings.data {
            match dtype {
                IndexDtype::F32 => put_f32(&mut out, v),
                IndexDtype::F16 => put_u16(&mut out, f16::from_f32(v).to_bits()),
            }
        }
    }
    Ok(out)
}

pub fn write_index(
    path: &Path,
    docs: &[CompressedDoc],
    mem_tokens: usize,
    d_model: usize,
    dtype: IndexDtype,
) -> Result<()> {
    let bytes = encode_index(docs, mem_tokens, d_model, dtype)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Compresses an entire corpus and writes the index in one pass.
pub fn build_index(
    path: &Path,
    model: &Model<f32>,
    docs: &[(String, Vec<u32>)],
    max_doc_len: usize,
    threads: usize,
    dtype: IndexDtype,
) -> Result<()> {
    let compressed = compress_corpus(model, docs, max_doc_len, threads)?;
    let cfg = &model.config;
    write_index(path, &compressed, cfg.mem_tokens, cfg.d_model, dtype)
}

/// An opened index: ids sorted for binary search, values widened to f32.
#[derive(Debug)]
pub struct CompressedIndex {
    pub mem_tokens: usize,
    pub d_model: usize,
    pub dtype: IndexDtype,
    ids: Vec<String>,
    values: Vec<f32>,
}

impl CompressedIndex {
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes, &path.display().to_string())
    }

    pub fn decode(bytes: &[u8], label: &str) -> Result<Self> {
        let mut r = Reader::new(bytes, label);
        r.expect_magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.corrupt(format!("unsupported version {version}")));
        }
        let mem_tokens = r.u32()? as usize;
        let d_model = r.u32()? as usize;
        if mem_tokens == 0 || d_model == 0 {
            return Err(r.corrupt("zero embedding dimensions in header"));
        }
        let dtype = IndexDtype::from_code(r.u8()?)
            .ok_or_else(|| r.corrupt("unknown dtype code"))?;
        let doc_count = r.u64()? as usize;
        let per_doc = mem_tokens
            .checked_mul(d_model)
            .ok_or_else(|| r.corrupt("embedding size overflows"))?;
        let mut ids: Vec<String> = Vec::new();
        let mut values: Vec<f32> = Vec::new();
        for i in 0..doc_count {
            let id_len = r.u32()? as usize;
            let id = r.string(id_len)?;
            if id.is_empty() {
                return Err(r.corrupt(format!("record {i} has an empty doc id")));
            }
            if let Some(prev) = ids.last() {
                if prev.as_str() >= id.as_str() {
                    return Err(r.corrupt(format!(
                        "doc ids not strictly ascending: {prev:?} then {id:?}"
                    )));
                }
            }
            for _ in 0..per_doc {
                let v = match dtype {
                    IndexDtype::F32 => r.f32()?,
                    IndexDtype::F16 => f16::from_bits(r.u16()?).to_f32(),
                };
                if !v.is_finite() {
                    return Err(r.corrupt(format!("non-finite value in record {id}")));
                }
                values.push(v);
            }
            ids.push(id);
        }
        r.expect_eof()?;
        Ok(CompressedIndex {
            mem_tokens,
            d_model,
            dtype,
            ids,
            values,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.ids
    }

    /// Binary search returning the slot and the number of id comparisons.
    fn locate(&self, doc_id: &str) -> (Option<usize>, usize) {
        let mut lo = 0usize;
        let mut hi = self.ids.len();
        let mut comparisons = 0usize;
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            comparisons += 1;
            match self.ids[mid].as_str().cmp(doc_id) {
                Ordering::Less => lo = mid + 1,
                Ordering::Greater => hi = mid,
                Ordering::Equal => return (Some(mid), comparisons),
            }
        }
        (None, comparisons)
    }

    fn record(&self, slot: usize) -> CompressedDoc {
        let per_doc = self.mem_tokens * self.d_model;
        let start = slot * per_doc;
        CompressedDoc {
            doc_id: self.ids[slot].clone(),
            embeddings: Tensor::new(
                self.mem_tokens,
                self.d_model,
                self.values[start..start + per_doc].to_vec(),
            ),
            source_len: None,
        }
    }

    pub fn get(&self, doc_id: &str) -> Option<CompressedDoc> {
        self.locate(doc_id).0.map(|slot| self.record(slot))
    }

    /// Fetches records in request order; unknown ids come back as None so a
    /// batch never fails as a whole.
    pub fn get_many(&self, doc_ids: &[String]) -> Vec<(String, Option<CompressedDoc>)> {
        doc_ids
            .iter()
            .map(|id| (id.clone(), self.get(id)))
            .collect()
    }
}

/// Storage footprint of a compressed collection: n_docs * c * h values.
pub fn storage_estimate(n_docs: u64, mem_tokens: usize, d_model: usize, bytes_per_value: usize) -> u64 {
    assert!(n_docs > 0, "document count must be positive");
    assert!(mem_tokens > 0, "memory token count must be positive");
    assert!(d_model > 0, "hidden size must be positive");
    assert!(bytes_per_value > 0, "value width must be positive");
    n_docs * mem_tokens as u64 * d_model as u64 * bytes_per_value as u64
}
