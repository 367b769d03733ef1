//! Dense 2-D tensors, named parameter stores, and a tape-based autodiff
//! graph. Everything is row-major and CPU-only; the graph is rebuilt per
//! forward pass and dropped after backward.

mod check;
mod graph;

pub use check::{finite_diff_check, HasParams};
pub use graph::{cosine_sim, Graph, Var, MASK_NEG};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Element type for the compute graph. f32 is the working precision;
/// f64 exists for gradient checking.
pub trait Scalar:
    Copy
    + Clone
    + PartialOrd
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn max_val(self, other: Self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        self.exp()
    }
    fn ln_1p(self) -> Self {
        self.ln_1p()
    }
    fn sqrt(self) -> Self {
        self.sqrt()
    }
    fn sin(self) -> Self {
        self.sin()
    }
    fn cos(self) -> Self {
        self.cos()
    }
    fn max_val(self, other: Self) -> Self {
        self.max(other)
    }
    fn is_finite(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        self.exp()
    }
    fn ln_1p(self) -> Self {
        self.ln_1p()
    }
    fn sqrt(self) -> Self {
        self.sqrt()
    }
    fn sin(self) -> Self {
        self.sin()
    }
    fn cos(self) -> Self {
        self.cos()
    }
    fn max_val(self, other: Self) -> Self {
        self.max(other)
    }
    fn is_finite(self) -> bool {
        self.is_finite()
    }
}

/// Row-major matrix. Vectors are 1xN or Nx1 as context requires.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar = f32> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape/data mismatch");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![F::ZERO; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { rows: r, cols: c, data }
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map_to_f64(&self) -> Tensor<f64> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.to_f64()).collect(),
        }
    }
}

impl Tensor<f32> {
    pub fn gaussian(rows: usize, cols: usize, std: f64, seed: u64) -> Self {
        let mut data = vec![0.0f32; rows * cols];
        crate::rng::fill_gaussian(&mut data, std, seed);
        Tensor { rows, cols, data }
    }
}

static STORE_IDS: AtomicU64 = AtomicU64::new(1);

/// One named parameter with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<F: Scalar> {
    pub value: Tensor<F>,
    pub grad: Option<Tensor<F>>,
    pub requires_grad: bool,
}

/// Named parameter collection. Iteration order is the sorted name order,
/// which the checkpoint format and the optimizer both rely on.
#[derive(Debug)]
pub struct ParamStore<F: Scalar = f32> {
    uid: u64,
    params: BTreeMap<String, Param<F>>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            uid: STORE_IDS.fetch_add(1, Ordering::Relaxed),
            params: BTreeMap::new(),
        }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn insert(&mut self, name: &str, value: Tensor<F>) {
        self.params.insert(
            name.to_string(),
            Param {
                value,
                grad: None,
                requires_grad: true,
            },
        );
    }

    pub fn remove(&mut self, name: &str) -> Option<Param<F>> {
        self.params.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param<F>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<F>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<F>> {
        Ok(&self.get(name)?.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<F>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param<F>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|(_, p)| p.requires_grad)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn set_requires_grad_all(&mut self, flag: bool) {
        for p in self.params.values_mut() {
            p.requires_grad = flag;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad = None;
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.value.data.len()).sum()
    }

    /// Accumulates `g` into the gradient of `name`.
    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &Tensor<F>) {
        let p = self
            .params
            .get_mut(name)
            .expect("gradient for unknown parameter");
        match &mut p.grad {
            Some(acc) => {
                debug_assert_eq!(acc.data.len(), g.data.len());
                for (a, b) in acc.data.iter_mut().zip(&g.data) {
                    *a += *b;
                }
            }
            None => p.grad = Some(g.clone()),
        }
    }
}

impl ParamStore<f32> {
    pub fn to_f64(&self) -> ParamStore<f64> {
        let mut out = ParamStore::new();
        for (name, p) in self.iter() {
            out.insert(name, p.value.map_to_f64());
            out.get_mut(name).unwrap().requires_grad = p.requires_grad;
        }
        out
    }
}
