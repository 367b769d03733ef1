//! Checkpoint file: magic "RRKCKPT1", format version, model config, training
//! step, then named parameter blobs sorted by name. Values are 32-bit
//! little-endian floats. One file typically holds both components, with
//! parameter names prefixed "compressor." and "reranker.".

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fileio::{put_f32, put_u32, put_u64, Reader};
use crate::tensor::{ParamStore, Tensor};

use super::ModelConfig;

const MAGIC: &[u8] = b"RRKCKPT1";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, step: u64) -> Self {
        Checkpoint {
            config,
            step,
            tensors: BTreeMap::new(),
        }
    }

    /// Adds every parameter of `store` under `prefix.`.
    pub fn add_store(&mut self, prefix: &str, store: &ParamStore<f32>) {
        for (name, p) in store.iter() {
            self.tensors
                .insert(format!("{prefix}.{name}"), p.value.clone());
        }
    }

    /// Extracts the parameters under `prefix.` into a fresh store, with the
    /// prefix stripped. Gradients start clear and everything is trainable;
    /// callers apply freezing afterwards.
    pub fn extract(&self, prefix: &str) -> Result<ParamStore<f32>> {
        let want = format!("{prefix}.");
        let mut store = ParamStore::new();
        for (name, t) in &self.tensors {
            if let Some(rest) = name.strip_prefix(&want) {
                store.insert(rest, t.clone());
            }
        }
        if store.names().is_empty() {
            return Err(Error::Invalid(format!(
                "checkpoint has no parameters under {prefix}."
            )));
        }
        Ok(store)
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        let want = format!("{prefix}.");
        self.tensors.keys().any(|n| n.starts_with(&want))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let c = &ckpt.config;
    for v in [
        c.vocab_size,
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.d_ff,
        c.max_seq_len,
        c.mem_tokens,
    ] {
        put_u32(&mut out, v as u32);
    }
    put_u64(&mut out, c.seed);
    put_u64(&mut out, ckpt.step);
    put_u32(&mut out, ckpt.tensors.len() as u32);
    for (name, t) in &ckpt.tensors {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, 2);
        put_u32(&mut out, t.rows as u32);
        put_u32(&mut out, t.cols as u32);
        for &v in &t.data {
            put_f32(&mut out, v);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path)?;
    let pstr = path.display().to_string();
    let mut r = Reader::new(&buf, &pstr);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let config = ModelConfig {
        vocab_size: dims[0],
        d_model: dims[1],
        n_layers: dims[2],
        n_heads: dims[3],
        d_ff: dims[4],
        max_seq_len: dims[5],
        mem_tokens: dims[6],
        seed: r.u64()?,
    };
    config
        .validate()
        .map_err(|e| r.corrupt(format!("invalid config: {e}")))?;
    let step = r.u64()?;
    let count = r.u32()? as usize;
    let mut tensors = BTreeMap::new();
    let mut prev_name: Option<String> = None;
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = r.string(name_len)?;
        if let Some(prev) = &prev_name {
            if *prev >= name {
                return Err(r.corrupt(format!("parameter names out of order at {name}")));
            }
        }
        let ndim = r.u32()?;
        if ndim != 2 {
            return Err(r.corrupt(format!("parameter {name} has {ndim} dims, expected 2")));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| r.corrupt(format!("parameter {name} shape overflows")))?;
        let raw = r.take(n * 4)?;
        let mut data = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(r.corrupt(format!("non-finite value in parameter {name}")));
            }
            data.push(v);
        }
        tensors.insert(name.clone(), Tensor::new(rows, cols, data));
        prev_name = Some(name);
    }
    r.expect_eof()?;
    Ok(Checkpoint {
        config,
        step,
        tensors,
    })
}
