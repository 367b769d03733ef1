//! Decoder-only backbone shared by the compressor and the reranker: token
//! embedding, pre-norm attention blocks with rotary positions, SiLU
//! feed-forward, and a linear score head. Low-rank adapters can be attached
//! to any weight matrix and merged back in.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seed_for;
use crate::tensor::{Graph, ParamStore, Scalar, Tensor, Var};

pub const DEFAULT_ADAPTER_RANK: usize = 8;
pub const DEFAULT_ADAPTER_ALPHA: f64 = 16.0;
const INIT_STD: f64 = 0.02;
const RMS_EPS: f64 = 1e-6;
const ROPE_BASE: f64 = 10000.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    /// Number of memory slots l; also the number of reserved MEM token ids.
    pub mem_tokens: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 4096,
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 512,
            max_seq_len: 1024,
            mem_tokens: 8,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Tiny variant for fast tests.
    pub fn micro(seed: u64) -> Self {
        ModelConfig {
            vocab_size: 96,
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
            max_seq_len: 256,
            mem_tokens: 2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return Err(Error::Config("zero-sized dimension".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if (self.d_model / self.n_heads) % 2 != 0 {
            return Err(Error::Config(
                "head dimension must be even for rotary positions".into(),
            ));
        }
        if self.vocab_size <= self.n_reserved() {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room for {} reserved ids",
                self.vocab_size,
                self.n_reserved()
            )));
        }
        if self.max_seq_len == 0 {
            return Err(Error::Config("max_seq_len must be positive".into()));
        }
        Ok(())
    }

    /// MEM slots plus separator and padding.
    pub fn n_reserved(&self) -> usize {
        self.mem_tokens + 2
    }

    /// Ids available to the hashing tokenizer.
    pub fn text_vocab(&self) -> usize {
        self.vocab_size - self.n_reserved()
    }

    /// Reserved id of memory slot `s`, 0-based, s < mem_tokens.
    pub fn mem_id(&self, s: usize) -> u32 {
        debug_assert!(s < self.mem_tokens);
        (self.text_vocab() + s) as u32
    }

    pub fn sep_id(&self) -> u32 {
        (self.vocab_size - 2) as u32
    }

    pub fn pad_id(&self) -> u32 {
        (self.vocab_size - 1) as u32
    }
}

/// One element of a model input: a vocabulary token or an injected
/// d_model-wide embedding (a compressed document slot).
#[derive(Debug, Clone)]
pub enum InputItem<F: Scalar = f32> {
    Token(u32),
    Vector(Vec<F>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterSpec {
    pub rank: usize,
    pub alpha: f64,
}

/// Backbone with named parameters and optional low-rank adapters keyed by
/// target weight name.
#[derive(Debug)]
pub struct Model<F: Scalar = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<F>,
    adapters: BTreeMap<String, AdapterSpec>,
}

impl Model<f32> {
    /// Fresh model with N(0, 0.02) weights drawn from streams keyed by
    /// `init_seed` and each parameter name; norm gains start at one and the
    /// score bias at zero. Value and output projections get an added
    /// identity component so attention starts out copying token content
    /// through the residual stream unrotated; with plain random projections
    /// the cosine head cannot see token overlap at the start of training
    /// and distillation stalls on length statistics.
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let d = config.d_model;
        let gauss = |name: &str, rows: usize, cols: usize| {
            Tensor::gaussian(rows, cols, INIT_STD, seed_for(init_seed, name))
        };
        params.insert("embed", gauss("embed", config.vocab_size, d));
        for i in 0..config.n_layers {
            for proj in ["wq", "wk", "wv", "wo"] {
                let name = format!("layers.{i}.attn.{proj}");
                let mut w = gauss(&name, d, d);
                if matches!(proj, "wv" | "wo") {
                    for r in 0..d {
                        w.data[r * d + r] += 1.0;
                    }
                }
                params.insert(&name, w);
            }
            let w1 = format!("layers.{i}.ff.w1");
            params.insert(&w1, gauss(&w1, d, config.d_ff));
            let w2 = format!("layers.{i}.ff.w2");
            params.insert(&w2, gauss(&w2, config.d_ff, d));
            params.insert(
                &format!("layers.{i}.norm1.gain"),
                Tensor::new(1, d, vec![1.0; d]),
            );
            params.insert(
                &format!("layers.{i}.norm2.gain"),
                Tensor::new(1, d, vec![1.0; d]),
            );
        }
        params.insert("final_norm.gain", Tensor::new(1, d, vec![1.0; d]));
        params.insert("score_head.w", gauss("score_head.w", d, 1));
        params.insert("score_head.b", Tensor::zeros(1, 1));
        Ok(Model {
            config,
            params,
            adapters: BTreeMap::new(),
        })
    }

    /// Rebuilds a model from checkpoint parameters, validating shapes and
    /// recovering adapter metadata from `*.lora_*` entries.
    pub fn from_parts(config: ModelConfig, params: ParamStore<f32>) -> Result<Self> {
        config.validate()?;
        let reference = Model::new(config.clone(), 0)?;
        for (name, p) in reference.params.iter() {
            let got = params
                .get(name)
                .map_err(|_| Error::Invalid(format!("checkpoint missing parameter {name}")))?;
            let (er, ec) = (p.value.rows, p.value.cols);
            if got.value.rows != er || got.value.cols != ec {
                return Err(Error::Invalid(format!(
                    "checkpoint parameter {name} has shape {}x{}, expected {er}x{ec}",
                    got.value.rows, got.value.cols
                )));
            }
        }
        let mut adapters = BTreeMap::new();
        for name in params.names() {
            if let Some(target) = name.strip_suffix(".lora_a") {
                let rank = params.value(&name)?.cols;
                let alpha_name = format!("{target}.lora_alpha");
                let alpha = params.value(&alpha_name)?.data[0] as f64;
                let b_name = format!("{target}.lora_b");
                let b = params.value(&b_name)?;
                let base = params.value(target)?;
                if b.rows != rank || b.cols != base.cols {
                    return Err(Error::Invalid(format!(
                        "adapter on {target} has inconsistent shapes"
                    )));
                }
                adapters.insert(target.to_string(), AdapterSpec { rank, alpha });
            } else if !name.contains(".lora_") && !reference.params.contains(&name) {
                return Err(Error::Invalid(format!("unexpected parameter {name}")));
            }
        }
        let mut model = Model {
            config,
            params,
            adapters,
        };
        for target in model.adapters.keys().cloned().collect::<Vec<_>>() {
            model
                .params
                .get_mut(&format!("{target}.lora_alpha"))?
                .requires_grad = false;
        }
        Ok(model)
    }

    /// Attaches a low-rank adapter (A: N(0,0.02), B: zeros) to one weight.
    pub fn attach_adapter(&mut self, target: &str, rank: usize, alpha: f64) -> Result<()> {
        if rank == 0 {
            return Err(Error::Invalid("adapter rank must be at least 1".into()));
        }
        if self.adapters.contains_key(target) {
            return Err(Error::DuplicateAdapter(target.to_string()));
        }
        let base = self.params.value(target)?;
        let (rows, cols) = (base.rows, base.cols);
        if rows < 2 || cols < 2 || target.contains(".lora_") {
            return Err(Error::BadAdapterTarget {
                name: target.to_string(),
                rows,
                cols,
            });
        }
        let a = Tensor::gaussian(
            rows,
            rank,
            INIT_STD,
            seed_for(self.config.seed, &format!("{target}.lora_a")),
        );
        self.params.insert(&format!("{target}.lora_a"), a);
        self.params
            .insert(&format!("{target}.lora_b"), Tensor::zeros(rank, cols));
        self.params.insert(
            &format!("{target}.lora_alpha"),
            Tensor::new(1, 1, vec![alpha as f32]),
        );
        self.params
            .get_mut(&format!("{target}.lora_alpha"))?
            .requires_grad = false;
        self.adapters
            .insert(target.to_string(), AdapterSpec { rank, alpha });
        Ok(())
    }

    /// Default adapter placement: Q and V projections of every layer.
    pub fn attach_default_adapters(&mut self) -> Result<()> {
        for i in 0..self.config.n_layers {
            self.attach_adapter(
                &format!("layers.{i}.attn.wq"),
                DEFAULT_ADAPTER_RANK,
                DEFAULT_ADAPTER_ALPHA,
            )?;
            self.attach_adapter(
                &format!("layers.{i}.attn.wv"),
                DEFAULT_ADAPTER_RANK,
                DEFAULT_ADAPTER_ALPHA,
            )?;
        }
        Ok(())
    }

    /// Folds every adapter into its base weight (W += (alpha/r) A·B) and
    /// removes the adapter parameters.
    pub fn merge_adapters(&mut self) -> Result<()> {
        let targets: Vec<(String, AdapterSpec)> = self
            .adapters
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        for (target, spec) in targets {
            let a = self.params.value(&format!("{target}.lora_a"))?.clone();
            let b = self.params.value(&format!("{target}.lora_b"))?.clone();
            let scale = (spec.alpha / spec.rank as f64) as f32;
            let w = &mut self.params.get_mut(&target)?.value;
            for i in 0..w.rows {
                for j in 0..w.cols {
                    let mut acc = 0.0f32;
                    for p in 0..spec.rank {
                        acc += a.at(i, p) * b.at(p, j);
                    }
                    w.data[i * w.cols + j] += scale * acc;
                }
            }
            self.params.remove(&format!("{target}.lora_a"));
            self.params.remove(&format!("{target}.lora_b"));
            self.params.remove(&format!("{target}.lora_alpha"));
        }
        self.adapters.clear();
        Ok(())
    }

    pub fn to_f64(&self) -> Model<f64> {
        Model {
            config: self.config.clone(),
            params: self.params.to_f64(),
            adapters: self.adapters.clone(),
        }
    }
}

impl crate::tensor::HasParams for Model<f64> {
    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        &mut self.params
    }
}

impl<F: Scalar> Model<F> {
    pub fn adapters(&self) -> &BTreeMap<String, AdapterSpec> {
        &self.adapters
    }

    pub fn trainable_parameter_names(&self) -> Vec<String> {
        self.params.trainable_names()
    }

    /// Projection through a weight, routing through the adapter when present:
    /// x·W + (alpha/r)·(x·A)·B.
    fn proj(&self, g: &mut Graph<F>, x: Var, name: &str) -> Result<Var> {
        let w = g.param(&self.params, name)?;
        let mut y = g.matmul(x, w)?;
        if let Some(spec) = self.adapters.get(name) {
            let a = g.param(&self.params, &format!("{name}.lora_a"))?;
            let b = g.param(&self.params, &format!("{name}.lora_b"))?;
            let xa = g.matmul(x, a)?;
            let xab = g.matmul(xa, b)?;
            let delta = g.scale(xab, spec.alpha / spec.rank as f64)?;
            y = g.add(y, delta)?;
        }
        Ok(y)
    }

    /// Embeds a mixed token/vector sequence into a T x d_model matrix.
    pub fn assemble(&self, g: &mut Graph<F>, items: &[InputItem<F>]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::Invalid("empty input sequence".into()));
        }
        if items.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: items.len(),
                max: self.config.max_seq_len,
            });
        }
        let table = g.param(&self.params, "embed")?;
        let mut parts: Vec<Var> = Vec::new();
        let mut run: Vec<u32> = Vec::new();
        for item in items {
            match item {
                InputItem::Token(id) => run.push(*id),
                InputItem::Vector(v) => {
                    if v.len() != self.config.d_model {
                        return Err(Error::Invalid(format!(
                            "injected vector has width {}, expected {}",
                            v.len(),
                            self.config.d_model
                        )));
                    }
                    if !run.is_empty() {
                        parts.push(g.embed(table, &run)?);
                        run.clear();
                    }
                    parts.push(g.constant(Tensor::new(1, self.config.d_model, v.clone())));
                }
            }
        }
        if !run.is_empty() {
            parts.push(g.embed(table, &run)?);
        }
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            g.concat_rows(&parts)
        }
    }

    /// Transformer stack over an assembled T x d_model input; returns the
    /// final-layer hidden states.
    pub fn run(&self, g: &mut Graph<F>, x: Var) -> Result<Var> {
        let cfg = &self.config;
        let dh = cfg.d_model / cfg.n_heads;
        let mut h = x;
        for i in 0..cfg.n_layers {
            let normed = {
                let gain = g.param(&self.params, &format!("layers.{i}.norm1.gain"))?;
                g.rms_norm(h, gain, RMS_EPS)?
            };
            let q = self.proj(g, normed, &format!("layers.{i}.attn.wq"))?;
            let k = self.proj(g, normed, &format!("layers.{i}.attn.wk"))?;
            let v = self.proj(g, normed, &format!("layers.{i}.attn.wv"))?;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for hd in 0..cfg.n_heads {
                let qh = g.slice_cols(q, hd * dh, dh)?;
                let kh = g.slice_cols(k, hd * dh, dh)?;
                let vh = g.slice_cols(v, hd * dh, dh)?;
                let qh = g.rope(qh, ROPE_BASE)?;
                let kh = g.rope(kh, ROPE_BASE)?;
                let kt = g.transpose(kh)?;
                let scores = g.matmul(qh, kt)?;
                let scores = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
                let masked = g.causal_mask(scores)?;
                let attn = g.softmax(masked)?;
                heads.push(g.matmul(attn, vh)?);
            }
            let joined = g.concat_cols(&heads)?;
            let o = self.proj(g, joined, &format!("layers.{i}.attn.wo"))?;
            h = g.add(h, o)?;

            let normed2 = {
                let gain = g.param(&self.params, &format!("layers.{i}.norm2.gain"))?;
                g.rms_norm(h, gain, RMS_EPS)?
            };
            let up = self.proj(g, normed2, &format!("layers.{i}.ff.w1"))?;
            let act = g.silu(up)?;
            let down = self.proj(g, act, &format!("layers.{i}.ff.w2"))?;
            h = g.add(h, down)?;
        }
        let gain = g.param(&self.params, "final_norm.gain")?;
        g.rms_norm(h, gain, RMS_EPS)
    }

    /// Full forward inside an existing graph.
    pub fn forward_graph(&self, g: &mut Graph<F>, items: &[InputItem<F>]) -> Result<Var> {
        self.validate_tokens(items)?;
        let x = self.assemble(g, items)?;
        self.run(g, x)
    }

    /// Convenience forward that owns its graph and returns the hidden states.
    pub fn forward(&self, items: &[InputItem<F>]) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let h = self.forward_graph(&mut g, items)?;
        Ok(g.value(h).clone())
    }

    /// Scalar score head over one hidden row.
    pub fn score_head(&self, g: &mut Graph<F>, hidden_row: Var) -> Result<Var> {
        let w = g.param(&self.params, "score_head.w")?;
        let b = g.param(&self.params, "score_head.b")?;
        let s = g.matmul(hidden_row, w)?;
        g.add(s, b)
    }

    fn validate_tokens(&self, items: &[InputItem<F>]) -> Result<()> {
        for item in items {
            if let InputItem::Token(id) = item {
                if *id as usize >= self.config.vocab_size {
                    return Err(Error::TokenOutOfRange {
                        id: *id,
                        vocab: self.config.vocab_size,
                    });
                }
            }
        }
        Ok(())
    }
}
