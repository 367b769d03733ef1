//! Python bindings: model construction and checkpoint loading, document
//! compression, index access, listwise scoring, and the evaluation metrics.
//! Embedding matrices cross the boundary as plain list-of-list floats.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use rrk_core::compress::{compress, CompressedDoc};
use rrk_core::cost;
use rrk_core::index::{build_index, CompressedIndex, IndexDtype};
use rrk_core::metrics;
use rrk_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Model, ModelConfig};
use rrk_core::rerank::{build_listwise_input, score_listwise};
use rrk_core::tensor::Tensor;
use rrk_core::tokenizer::Tokenizer as CoreTokenizer;
use rrk_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows_of(t: &Tensor<f32>) -> Vec<Vec<f32>> {
    (0..t.rows).map(|i| t.row(i).to_vec()).collect()
}

#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (vocab_size=4096, d_model=128, n_layers=4, n_heads=4, d_ff=512, max_seq_len=1024, mem_tokens=8, seed=42))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        vocab_size: usize,
        d_model: usize,
        n_layers: usize,
        n_heads: usize,
        d_ff: usize,
        max_seq_len: usize,
        mem_tokens: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let inner = ModelConfig {
            vocab_size,
            d_model,
            n_layers,
            n_heads,
            d_ff,
            max_seq_len,
            mem_tokens,
            seed,
        };
        inner.validate().map_err(to_py)?;
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn micro(seed: u64) -> Self {
        PyConfig {
            inner: ModelConfig::micro(seed),
        }
    }

    #[getter]
    fn d_model(&self) -> usize {
        self.inner.d_model
    }

    #[getter]
    fn mem_tokens(&self) -> usize {
        self.inner.mem_tokens
    }

    #[getter]
    fn max_seq_len(&self) -> usize {
        self.inner.max_seq_len
    }

    fn text_vocab(&self) -> usize {
        self.inner.text_vocab()
    }

    fn sep_id(&self) -> u32 {
        self.inner.sep_id()
    }

    fn pad_id(&self) -> u32 {
        self.inner.pad_id()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "Tokenizer")]
struct PyTokenizer {
    inner: CoreTokenizer,
}

#[pymethods]
impl PyTokenizer {
    #[new]
    fn new(text_vocab: usize) -> Self {
        PyTokenizer {
            inner: CoreTokenizer::new(text_vocab),
        }
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        self.inner.encode(text)
    }
}

#[pyclass(name = "Model")]
struct PyModel {
    inner: Model<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(config: PyConfig, init_seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            inner: Model::new(config.inner, init_seed).map_err(to_py)?,
        })
    }

    /// Loads one parameter store ("compressor" or "reranker") from a
    /// training checkpoint.
    #[staticmethod]
    fn load(path: PathBuf, store: &str) -> PyResult<Self> {
        let ckpt = load_checkpoint(&path).map_err(to_py)?;
        if !ckpt.has_prefix(store) {
            return Err(PyValueError::new_err(format!(
                "checkpoint {} holds no {store} parameters",
                path.display()
            )));
        }
        let params = ckpt.extract(store).map_err(to_py)?;
        Ok(PyModel {
            inner: Model::from_parts(ckpt.config, params).map_err(to_py)?,
        })
    }

    /// Saves this model's parameters alone, under the given store name.
    fn save(&self, path: PathBuf, store: &str, step: u64) -> PyResult<()> {
        let mut ckpt = Checkpoint::new(self.inner.config.clone(), step);
        ckpt.add_store(store, &self.inner.params);
        save_checkpoint(&path, &ckpt).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> PyConfig {
        PyConfig {
            inner: self.inner.config.clone(),
        }
    }

    /// Compresses one document to its l x d_model embedding block.
    fn compress_doc(
        &self,
        doc_id: &str,
        tokens: Vec<u32>,
        max_doc_len: usize,
    ) -> PyResult<Vec<Vec<f32>>> {
        let doc = compress(&self.inner, doc_id, &tokens, max_doc_len).map_err(to_py)?;
        Ok(rows_of(&doc.embeddings))
    }

    /// Compresses a corpus into an on-disk embedding index.
    #[pyo3(signature = (path, docs, max_doc_len=128, threads=1, dtype="f32"))]
    fn build_index(
        &self,
        path: PathBuf,
        docs: Vec<(String, Vec<u32>)>,
        max_doc_len: usize,
        threads: usize,
        dtype: &str,
    ) -> PyResult<()> {
        let dtype: IndexDtype = dtype.parse().map_err(to_py)?;
        build_index(&path, &self.inner, &docs, max_doc_len, threads, dtype).map_err(to_py)
    }

    /// Scores candidates listwise; returns (doc_id, score) in input order.
    fn rerank(
        &self,
        query_tokens: Vec<u32>,
        candidates: Vec<(String, Vec<Vec<f32>>)>,
    ) -> PyResult<Vec<(String, f32)>> {
        let docs: Vec<CompressedDoc> = candidates
            .into_iter()
            .map(|(doc_id, rows)| CompressedDoc {
                doc_id,
                embeddings: Tensor::from_rows(&rows),
                source_len: None,
            })
            .collect();
        let refs: Vec<&CompressedDoc> = docs.iter().collect();
        let input = build_listwise_input(&self.inner.config, &query_tokens, &refs).map_err(to_py)?;
        let scored = score_listwise(&self.inner, &input).map_err(to_py)?;
        Ok(scored.entries)
    }
}

#[pyclass(name = "Index")]
struct PyIndex {
    inner: CompressedIndex,
}

#[pymethods]
impl PyIndex {
    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        Ok(PyIndex {
            inner: CompressedIndex::open(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn mem_tokens(&self) -> usize {
        self.inner.mem_tokens
    }

    #[getter]
    fn d_model(&self) -> usize {
        self.inner.d_model
    }

    fn __len__(&self) -> usize {
        self.inner.doc_count()
    }

    fn doc_ids(&self) -> Vec<String> {
        self.inner.doc_ids().to_vec()
    }

    fn get(&self, doc_id: &str) -> Option<Vec<Vec<f32>>> {
        self.inner
            .get(doc_id)
            .map(|doc| rows_of(&doc.embeddings))
    }
}

#[pyfunction]
#[pyo3(signature = (ranking, judged, k=10, gain="exponential"))]
fn ndcg_at_k(
    ranking: Vec<String>,
    judged: HashMap<String, u32>,
    k: usize,
    gain: &str,
) -> PyResult<f64> {
    let gain: metrics::Gain = gain.parse().map_err(to_py)?;
    Ok(metrics::ndcg_at_k(
        &ranking,
        &judged.into_iter().collect(),
        k,
        gain,
    ))
}

#[pyfunction]
fn kendall_tau(a: Vec<f64>, b: Vec<f64>) -> f64 {
    metrics::kendall_tau(&a, &b)
}

#[pyfunction]
fn seq_len(mode: &str, q_len: usize, k: usize, l_or_d: usize) -> PyResult<usize> {
    let mode: cost::Mode = mode.parse().map_err(to_py)?;
    Ok(cost::seq_len(mode, q_len, k, l_or_d))
}

#[pyfunction]
fn attention_cost(mode: &str, q_len: usize, k: usize, l_or_d: usize) -> PyResult<f64> {
    let mode: cost::Mode = mode.parse().map_err(to_py)?;
    Ok(cost::attention_cost(mode, q_len, k, l_or_d))
}

#[pymodule]
fn rrk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTokenizer>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyIndex>()?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(seq_len, m)?)?;
    m.add_function(wrap_pyfunction!(attention_cost, m)?)?;
    Ok(())
}
