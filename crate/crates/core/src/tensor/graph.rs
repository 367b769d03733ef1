use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{ParamStore, Scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F: Scalar> {
    Constant,
    Param,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    BiasAdd(usize, usize),
    Embed { table: usize, ids: Vec<u32> },
    ConcatRows(Vec<usize>),
    SliceRows { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    SliceCols { x: usize, start: usize },
    Softmax(usize),
    RmsNorm { x: usize, gain: usize, eps: F },
    CausalMask(usize),
    Rope { x: usize, base: F },
    Silu(usize),
    Softplus(usize),
    Cosine(usize, usize),
    Sum(usize),
}

struct Node<F: Scalar> {
    op: Op<F>,
    value: Tensor<F>,
}

/// Additive attention mask value for future positions. Finite on purpose so
/// intermediate values never hold infinities.
pub const MASK_NEG: f64 = -1e9;

/// Tape-based computation graph. Ops evaluate eagerly; `backward` walks the
/// tape in reverse and accumulates gradients into the bound parameter stores.
/// A graph is built per forward pass and dropped afterwards.
pub struct Graph<F: Scalar = f32> {
    nodes: Vec<Node<F>>,
    param_cache: HashMap<(u64, String), usize>,
    bindings: Vec<(usize, u64, String)>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_cache: HashMap::new(),
            bindings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows, t.cols)
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> Var {
        debug_assert!(value.is_all_finite(), "non-finite value produced");
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, x: F) -> Var {
        self.constant(Tensor::new(1, 1, vec![x]))
    }

    /// Leases a named parameter into the graph. Repeated leases of the same
    /// parameter return the same node, so gradients from every use site
    /// accumulate onto one leaf.
    pub fn param(&mut self, store: &ParamStore<F>, name: &str) -> Result<Var> {
        let key = (store.uid(), name.to_string());
        if let Some(&idx) = self.param_cache.get(&key) {
            return Ok(Var(idx));
        }
        let p = store.get(name)?;
        let var = self.push(Op::Param, p.value.clone());
        self.param_cache.insert(key, var.0);
        if p.requires_grad {
            self.bindings.push((var.0, store.uid(), name.to_string()));
        }
        Ok(var)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.cols != tb.rows {
            return Err(shape_err("matmul", ta, tb));
        }
        let value = matmul_nn(ta, tb);
        Ok(self.push(Op::Matmul(a.0, b.0), value))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = transpose(&self.nodes[x.0].value);
        Ok(self.push(Op::Transpose(x.0), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rows != tb.rows || ta.cols != tb.cols {
            return Err(shape_err("add", ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(ta.rows, ta.cols, data);
        Ok(self.push(Op::Add(a.0, b.0), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rows != tb.rows || ta.cols != tb.cols {
            return Err(shape_err("sub", ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x - y).collect();
        let value = Tensor::new(ta.rows, ta.cols, data);
        Ok(self.push(Op::Sub(a.0, b.0), value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rows != tb.rows || ta.cols != tb.cols {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(ta.rows, ta.cols, data);
        Ok(self.push(Op::Mul(a.0, b.0), value))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = F::from_f64(factor);
        let t = &self.nodes[x.0].value;
        let data = t.data.iter().map(|&v| v * f).collect();
        let value = Tensor::new(t.rows, t.cols, data);
        Ok(self.push(Op::Scale(x.0, f), value))
    }

    /// Adds a 1xN bias row to every row of `x`.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if tb.rows != 1 || tb.cols != tx.cols {
            return Err(shape_err("bias_add", tx, tb));
        }
        let mut data = Vec::with_capacity(tx.data.len());
        for i in 0..tx.rows {
            for j in 0..tx.cols {
                data.push(tx.at(i, j) + tb.data[j]);
            }
        }
        let value = Tensor::new(tx.rows, tx.cols, data);
        Ok(self.push(Op::BiasAdd(x.0, bias.0), value))
    }

    /// Gathers rows of `table` by token id.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let t = &self.nodes[table.0].value;
        let vocab = t.rows;
        for &id in ids {
            if id as usize >= vocab {
                return Err(Error::TokenOutOfRange { id, vocab });
            }
        }
        let cols = t.cols;
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            data.extend_from_slice(t.row(id as usize));
        }
        let value = Tensor::new(ids.len(), cols, data);
        Ok(self.push(
            Op::Embed {
                table: table.0,
                ids: ids.to_vec(),
            },
            value,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat_rows of zero parts".into()));
        }
        let cols = self.nodes[parts[0].0].value.cols;
        let mut rows = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.cols != cols {
                return Err(shape_err("concat_rows", &self.nodes[parts[0].0].value, t));
            }
            rows += t.rows;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&self.nodes[p.0].value.data);
        }
        let value = Tensor::new(rows, cols, data);
        Ok(self.push(Op::ConcatRows(parts.iter().map(|v| v.0).collect()), value))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if start + len > t.rows {
            return Err(Error::Invalid(format!(
                "slice_rows [{start}, {}) out of bounds for {} rows",
                start + len,
                t.rows
            )));
        }
        let value = Tensor::new(
            len,
            t.cols,
            t.data[start * t.cols..(start + len) * t.cols].to_vec(),
        );
        Ok(self.push(Op::SliceRows { x: x.0, start }, value))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat_cols of zero parts".into()));
        }
        let rows = self.nodes[parts[0].0].value.rows;
        let mut cols = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.rows != rows {
                return Err(shape_err("concat_cols", &self.nodes[parts[0].0].value, t));
            }
            cols += t.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                let t = &self.nodes[p.0].value;
                data.extend_from_slice(t.row(i));
            }
        }
        let value = Tensor::new(rows, cols, data);
        Ok(self.push(Op::ConcatCols(parts.iter().map(|v| v.0).collect()), value))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if start + len > t.cols {
            return Err(Error::Invalid(format!(
                "slice_cols [{start}, {}) out of bounds for {} cols",
                start + len,
                t.cols
            )));
        }
        let mut data = Vec::with_capacity(t.rows * len);
        for i in 0..t.rows {
            let row = t.row(i);
            data.extend_from_slice(&row[start..start + len]);
        }
        let value = Tensor::new(t.rows, len, data);
        Ok(self.push(Op::SliceCols { x: x.0, start }, value))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let mut data = Vec::with_capacity(t.data.len());
        for i in 0..t.rows {
            let row = t.row(i);
            let mut m = row[0];
            for &v in row {
                m = m.max_val(v);
            }
            let mut denom = F::ZERO;
            let start = data.len();
            for &v in row {
                let e = (v - m).exp();
                data.push(e);
                denom += e;
            }
            for v in &mut data[start..] {
                *v = *v / denom;
            }
        }
        let value = Tensor::new(t.rows, t.cols, data);
        Ok(self.push(Op::Softmax(x.0), value))
    }

    /// Row-wise RMS normalization with a learned per-column gain.
    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let (tx, tg) = (&self.nodes[x.0].value, &self.nodes[gain.0].value);
        if tg.rows != 1 || tg.cols != tx.cols {
            return Err(shape_err("rms_norm", tx, tg));
        }
        let e = F::from_f64(eps);
        let mut data = Vec::with_capacity(tx.data.len());
        for i in 0..tx.rows {
            let row = tx.row(i);
            let inv = inv_rms(row, e);
            for (j, &v) in row.iter().enumerate() {
                data.push(v * inv * tg.data[j]);
            }
        }
        let value = Tensor::new(tx.rows, tx.cols, data);
        Ok(self.push(
            Op::RmsNorm {
                x: x.0,
                gain: gain.0,
                eps: e,
            },
            value,
        ))
    }

    /// Adds a large negative constant above the diagonal of a square matrix.
    pub fn causal_mask(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if t.rows != t.cols {
            return Err(Error::Invalid(format!(
                "causal_mask needs a square matrix, got {}x{}",
                t.rows, t.cols
            )));
        }
        let neg = F::from_f64(MASK_NEG);
        let mut data = t.data.clone();
        for i in 0..t.rows {
            for j in (i + 1)..t.cols {
                data[i * t.cols + j] += neg;
            }
        }
        let value = Tensor::new(t.rows, t.cols, data);
        Ok(self.push(Op::CausalMask(x.0), value))
    }

    /// Rotary position encoding over interleaved pairs; row index is the
    /// absolute position.
    pub fn rope(&mut self, x: Var, base: f64) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if t.cols % 2 != 0 {
            return Err(Error::Invalid(format!(
                "rope needs an even width, got {}",
                t.cols
            )));
        }
        let b = F::from_f64(base);
        let value = rope_apply(t, b, false);
        Ok(self.push(Op::Rope { x: x.0, base: b }, value))
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let data = t.data.iter().map(|&v| v * sigmoid(v)).collect();
        let value = Tensor::new(t.rows, t.cols, data);
        Ok(self.push(Op::Silu(x.0), value))
    }

    /// Numerically stable ln(1 + e^x), elementwise.
    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let data = t.data.iter().map(|&v| softplus_stable(v)).collect();
        let value = Tensor::new(t.rows, t.cols, data);
        Ok(self.push(Op::Softplus(x.0), value))
    }

    /// Cosine similarity of two equal-shape vectors, yielding a 1x1 node.
    /// Zero-norm inputs are rejected.
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (&self.nodes[u.0].value, &self.nodes[v.0].value);
        if tu.rows != tv.rows || tu.cols != tv.cols || tu.rows.min(tu.cols) != 1 {
            return Err(shape_err("cosine", tu, tv));
        }
        let (dot, nu, nv) = cosine_parts(&tu.data, &tv.data);
        if nu == F::ZERO || nv == F::ZERO {
            return Err(Error::ZeroNormVector);
        }
        let value = Tensor::new(1, 1, vec![dot / (nu * nv)]);
        Ok(self.push(Op::Cosine(u.0, v.0), value))
    }

    /// Sum of all elements, yielding a 1x1 node.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let mut acc = F::ZERO;
        for &v in &t.data {
            acc += v;
        }
        Ok(self.push(Op::Sum(x.0), Tensor::new(1, 1, vec![acc])))
    }

    /// Mean of all elements.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.nodes[x.0].value.data.len();
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Reverse-mode sweep from a scalar root. Gradients accumulate into the
    /// matching parameter stores; every graph node is visited exactly once in
    /// reverse construction order, so results are deterministic.
    pub fn backward(&mut self, root: Var, stores: &mut [&mut ParamStore<F>]) -> Result<()> {
        let rt = &self.nodes[root.0].value;
        if rt.rows != 1 || rt.cols != 1 {
            return Err(Error::NonScalarRoot {
                rows: rt.rows,
                cols: rt.cols,
            });
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(1, 1, vec![F::ONE]));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            debug_assert!(g.is_all_finite(), "non-finite gradient at node {idx}");
            match &self.nodes[idx].op {
                Op::Constant | Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = matmul_nt(&g, &self.nodes[b].value);
                    let gb = matmul_tn(&self.nodes[a].value, &g);
                    accumulate(&mut grads[a], ga);
                    accumulate(&mut grads[b], gb);
                }
                Op::Transpose(x) => {
                    let x = *x;
                    accumulate(&mut grads[x], transpose(&g));
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads[a], g.clone());
                    accumulate(&mut grads[b], g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    let neg = Tensor::new(g.rows, g.cols, g.data.iter().map(|&v| -v).collect());
                    accumulate(&mut grads[a], g);
                    accumulate(&mut grads[b], neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = hadamard(&g, &self.nodes[b].value);
                    let gb = hadamard(&g, &self.nodes[a].value);
                    accumulate(&mut grads[a], ga);
                    accumulate(&mut grads[b], gb);
                }
                Op::Scale(x, f) => {
                    let (x, f) = (*x, *f);
                    let gx = Tensor::new(g.rows, g.cols, g.data.iter().map(|&v| v * f).collect());
                    accumulate(&mut grads[x], gx);
                }
                Op::BiasAdd(x, b) => {
                    let (x, b) = (*x, *b);
                    let mut gb = Tensor::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            gb.data[j] += g.at(i, j);
                        }
                    }
                    accumulate(&mut grads[x], g);
                    accumulate(&mut grads[b], gb);
                }
                Op::Embed { table, ids } => {
                    let table = *table;
                    let tt = &self.nodes[table].value;
                    let mut gt = Tensor::zeros(tt.rows, tt.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = id as usize * tt.cols;
                        for j in 0..tt.cols {
                            gt.data[dst + j] += g.at(r, j);
                        }
                    }
                    accumulate(&mut grads[table], gt);
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut row = 0;
                    for p in parts {
                        let t = &self.nodes[p].value;
                        let gp = Tensor::new(
                            t.rows,
                            t.cols,
                            g.data[row * g.cols..(row + t.rows) * g.cols].to_vec(),
                        );
                        row += t.rows;
                        accumulate(&mut grads[p], gp);
                    }
                }
                Op::SliceRows { x, start } => {
                    let (x, start) = (*x, *start);
                    let t = &self.nodes[x].value;
                    let mut gx = Tensor::zeros(t.rows, t.cols);
                    gx.data[start * t.cols..start * t.cols + g.data.len()]
                        .copy_from_slice(&g.data);
                    accumulate(&mut grads[x], gx);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut col = 0;
                    for p in parts {
                        let t = &self.nodes[p].value;
                        let mut gp = Tensor::zeros(t.rows, t.cols);
                        for i in 0..t.rows {
                            for j in 0..t.cols {
                                gp.data[i * t.cols + j] = g.at(i, col + j);
                            }
                        }
                        col += t.cols;
                        accumulate(&mut grads[p], gp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let (x, start) = (*x, *start);
                    let t = &self.nodes[x].value;
                    let mut gx = Tensor::zeros(t.rows, t.cols);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            gx.data[i * t.cols + start + j] = g.at(i, j);
                        }
                    }
                    accumulate(&mut grads[x], gx);
                }
                Op::Softmax(x) => {
                    let x = *x;
                    let y = &self.nodes[idx].value;
                    let mut gx = Tensor::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let mut dot = F::ZERO;
                        for (yv, gv) in yr.iter().zip(gr) {
                            dot += *yv * *gv;
                        }
                        for j in 0..y.cols {
                            gx.data[i * y.cols + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads[x], gx);
                }
                Op::RmsNorm { x, gain, eps } => {
                    let (x, gain, eps) = (*x, *gain, *eps);
                    let tx = &self.nodes[x].value;
                    let tg = &self.nodes[gain].value;
                    let d = tx.cols;
                    let inv_d = F::ONE / F::from_f64(d as f64);
                    let mut gx = Tensor::zeros(tx.rows, tx.cols);
                    let mut gg = Tensor::zeros(1, d);
                    for i in 0..tx.rows {
                        let row = tx.row(i);
                        let gr = g.row(i);
                        let u = inv_rms(row, eps);
                        let mut dot = F::ZERO;
                        for j in 0..d {
                            dot += gr[j] * tg.data[j] * row[j];
                        }
                        let u3 = u * u * u;
                        for j in 0..d {
                            gx.data[i * d + j] = gr[j] * tg.data[j] * u - row[j] * u3 * inv_d * dot;
                            gg.data[j] += gr[j] * row[j] * u;
                        }
                    }
                    accumulate(&mut grads[x], gx);
                    accumulate(&mut grads[gain], gg);
                }
                Op::CausalMask(x) => {
                    let x = *x;
                    accumulate(&mut grads[x], g);
                }
                Op::Rope { x, base } => {
                    let (x, base) = (*x, *base);
                    let gx = rope_apply(&g, base, true);
                    accumulate(&mut grads[x], gx);
                }
                Op::Silu(x) => {
                    let x = *x;
                    let tx = &self.nodes[x].value;
                    let data = tx
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&v, &gv)| {
                            let s = sigmoid(v);
                            gv * s * (F::ONE + v * (F::ONE - s))
                        })
                        .collect();
                    accumulate(&mut grads[x], Tensor::new(tx.rows, tx.cols, data));
                }
                Op::Softplus(x) => {
                    let x = *x;
                    let tx = &self.nodes[x].value;
                    let data = tx
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&v, &gv)| gv * sigmoid(v))
                        .collect();
                    accumulate(&mut grads[x], Tensor::new(tx.rows, tx.cols, data));
                }
                Op::Cosine(u, v) => {
                    let (u, v) = (*u, *v);
                    let tu = &self.nodes[u].value;
                    let tv = &self.nodes[v].value;
                    let (dot, nu, nv) = cosine_parts(&tu.data, &tv.data);
                    let c = dot / (nu * nv);
                    let gs = g.data[0];
                    let gu: Vec<F> = tu
                        .data
                        .iter()
                        .zip(&tv.data)
                        .map(|(&uv, &vv)| gs * (vv / (nu * nv) - c * uv / (nu * nu)))
                        .collect();
                    let gv: Vec<F> = tu
                        .data
                        .iter()
                        .zip(&tv.data)
                        .map(|(&uv, &vv)| gs * (uv / (nu * nv) - c * vv / (nv * nv)))
                        .collect();
                    accumulate(&mut grads[u], Tensor::new(tu.rows, tu.cols, gu));
                    accumulate(&mut grads[v], Tensor::new(tv.rows, tv.cols, gv));
                }
                Op::Sum(x) => {
                    let x = *x;
                    let t = &self.nodes[x].value;
                    let gs = g.data[0];
                    accumulate(
                        &mut grads[x],
                        Tensor::new(t.rows, t.cols, vec![gs; t.data.len()]),
                    );
                }
            }
        }

        for (node, uid, name) in &self.bindings {
            let Some(g) = &grads[*node] else { continue };
            let store = stores
                .iter_mut()
                .find(|s| s.uid() == *uid)
                .ok_or_else(|| {
                    Error::Invalid(format!("no parameter store bound for {name}"))
                })?;
            store.accumulate_grad(name, g);
        }
        Ok(())
    }
}

fn shape_err<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: vec![a.rows, a.cols],
        rhs: vec![b.rows, b.cols],
    }
}

fn accumulate<F: Scalar>(slot: &mut Option<Tensor<F>>, g: Tensor<F>) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.data.len(), g.data.len());
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a += *b;
            }
        }
        None => *slot = Some(g),
    }
}

fn transpose<F: Scalar>(t: &Tensor<F>) -> Tensor<F> {
    let mut data = Vec::with_capacity(t.data.len());
    for j in 0..t.cols {
        for i in 0..t.rows {
            data.push(t.at(i, j));
        }
    }
    Tensor::new(t.cols, t.rows, data)
}

fn hadamard<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    Tensor::new(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect(),
    )
}

fn inv_rms<F: Scalar>(row: &[F], eps: F) -> F {
    let mut ms = F::ZERO;
    for &v in row {
        ms += v * v;
    }
    ms = ms / F::from_f64(row.len() as f64);
    F::ONE / (ms + eps).sqrt()
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::ZERO {
        F::ONE / (F::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::ONE + e)
    }
}

fn softplus_stable<F: Scalar>(x: F) -> F {
    x.max_val(F::ZERO) + (-abs(x)).exp().ln_1p()
}

fn abs<F: Scalar>(x: F) -> F {
    if x < F::ZERO {
        -x
    } else {
        x
    }
}

/// Cosine similarity of two equal-length slices, sharing the exact
/// arithmetic of the graph's cosine op so both paths agree bit-for-bit.
pub fn cosine_sim<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    debug_assert_eq!(u.len(), v.len());
    let (dot, nu, nv) = cosine_parts(u, v);
    if nu == F::ZERO || nv == F::ZERO {
        return Err(Error::ZeroNormVector);
    }
    Ok(dot / (nu * nv))
}

fn cosine_parts<F: Scalar>(u: &[F], v: &[F]) -> (F, F, F) {
    let mut dot = F::ZERO;
    let mut uu = F::ZERO;
    let mut vv = F::ZERO;
    for (&a, &b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    (dot, uu.sqrt(), vv.sqrt())
}

/// C = A * B with an ikj loop so the inner loop runs over contiguous rows.
fn matmul_nn<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![F::ZERO; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(m, n, out)
}

/// C = A * B^T, row-dot-row.
fn matmul_nt<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    debug_assert_eq!(a.cols, b.cols);
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = F::ZERO;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out.push(acc);
        }
    }
    Tensor::new(m, n, out)
}

/// C = A^T * B.
fn matmul_tn<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    debug_assert_eq!(a.rows, b.rows);
    let (k, m, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![F::ZERO; m * n];
    for i in 0..k {
        let arow = &a.data[i * m..(i + 1) * m];
        let brow = &b.data[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(m, n, out)
}

/// Applies the pairwise rotation (or its transpose for the backward pass).
fn rope_apply<F: Scalar>(t: &Tensor<F>, base: F, inverse: bool) -> Tensor<F> {
    let d = t.cols;
    let mut data = Vec::with_capacity(t.data.len());
    for pos in 0..t.rows {
        let row = t.row(pos);
        for p in 0..d / 2 {
            let exponent = -2.0 * p as f64 / d as f64;
            let theta = F::from_f64(base.to_f64().powf(exponent) * pos as f64);
            let (sin, cos) = (theta.sin(), theta.cos());
            let (x0, x1) = (row[2 * p], row[2 * p + 1]);
            if inverse {
                data.push(x0 * cos + x1 * sin);
                data.push(-x0 * sin + x1 * cos);
            } else {
                data.push(x0 * cos - x1 * sin);
                data.push(x0 * sin + x1 * cos);
            }
        }
    }
    Tensor::new(t.rows, t.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::new(rows, cols, data.to_vec())
    }

    #[test]
    fn matmul_small_example() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.constant(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(t(2, 1, &[1.0, 1.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data, vec![3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_mismatch_is_an_error() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.constant(t(2, 3, &[0.0; 6]));
        let b = g.constant(t(2, 2, &[0.0; 4]));
        assert!(matches!(
            g.matmul(a, b),
            Err(Error::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn transpose_round_trips() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let xt = g.transpose(x).unwrap();
        assert_eq!(g.shape(xt), (3, 2));
        assert_eq!(g.value(xt).data, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let back = g.transpose(xt).unwrap();
        assert_eq!(g.value(back).data, g.value(x).data);
    }

    #[test]
    fn softmax_known_values() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(1, 2, &[(2.0f64).ln(), 0.0]));
        let y = g.softmax(x).unwrap();
        let v = &g.value(y).data;
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_under_mask() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(3, 3, &[0.3, -1.0, 2.0, 0.0, 0.5, -0.2, 1.0, 1.0, 1.0]));
        let m = g.causal_mask(x).unwrap();
        let y = g.softmax(m).unwrap();
        let v = g.value(y);
        for i in 0..3 {
            let s: f64 = v.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in (i + 1)..3 {
                assert!(v.at(i, j) < 1e-30, "future position leaked: {}", v.at(i, j));
            }
        }
    }

    #[test]
    fn rms_norm_known_values() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(1, 2, &[3.0, 4.0]));
        let gain = g.constant(t(1, 2, &[1.0, 1.0]));
        let y = g.rms_norm(x, gain, 1e-6).unwrap();
        let v = &g.value(y).data;
        assert!((v[0] - 0.8485).abs() < 1e-4, "{}", v[0]);
        assert!((v[1] - 1.1314).abs() < 1e-4, "{}", v[1]);
    }

    #[test]
    fn cosine_known_value_and_zero_norm_error() {
        let mut g: Graph<f64> = Graph::new();
        let u = g.constant(t(1, 2, &[1.0, 0.0]));
        let v = g.constant(t(1, 2, &[1.0, 1.0]));
        let c = g.cosine(u, v).unwrap();
        assert!((g.value(c).data[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let z = g.constant(t(1, 2, &[0.0, 0.0]));
        assert!(matches!(g.cosine(u, z), Err(Error::ZeroNormVector)));
    }

    #[test]
    fn silu_and_softplus_known_values() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(1, 3, &[0.0, 1.0, -40.0]));
        let s = g.silu(x).unwrap();
        let v = &g.value(s).data;
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert!(v[2].abs() < 1e-12);

        let p = g.softplus(x).unwrap();
        let w = &g.value(p).data;
        assert!((w[0] - (2.0f64).ln()).abs() < 1e-12);
        assert!(w[2] >= 0.0 && w[2] < 1e-12);
    }

    #[test]
    fn rope_is_identity_at_position_zero_and_preserves_norms() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(3, 4, &[
            0.5, -1.0, 2.0, 0.3,
            1.0, 1.0, 1.0, 1.0,
            -0.2, 0.7, 0.1, -0.9,
        ]));
        let y = g.rope(x, 10000.0).unwrap();
        let (vx, vy) = (g.value(x).clone(), g.value(y).clone());
        assert_eq!(vx.row(0), vy.row(0));
        for i in 0..3 {
            let nx: f64 = vx.row(i).iter().map(|v| v * v).sum();
            let ny: f64 = vy.row(i).iter().map(|v| v * v).sum();
            assert!((nx - ny).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let a = g.slice_rows(x, 0, 1).unwrap();
        let b = g.slice_rows(x, 1, 2).unwrap();
        let back = g.concat_rows(&[a, b]).unwrap();
        assert_eq!(g.value(back).data, g.value(x).data);

        let l = g.slice_cols(x, 0, 1).unwrap();
        let r = g.slice_cols(x, 1, 1).unwrap();
        let back2 = g.concat_cols(&[l, r]).unwrap();
        assert_eq!(g.value(back2).data, g.value(x).data);
    }

    #[test]
    fn embed_gathers_rows_and_validates_ids() {
        let mut g: Graph<f64> = Graph::new();
        let table = g.constant(t(3, 2, &[0.0, 0.1, 1.0, 1.1, 2.0, 2.1]));
        let e = g.embed(table, &[2, 0, 2]).unwrap();
        assert_eq!(g.value(e).data, vec![2.0, 2.1, 0.0, 0.1, 2.0, 2.1]);
        assert!(matches!(
            g.embed(table, &[3]),
            Err(Error::TokenOutOfRange { id: 3, vocab: 3 })
        ));
    }

    #[test]
    fn backward_of_sum_is_ones_and_needs_scalar_root() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("w", t(2, 2, &[1.0, -2.0, 0.5, 3.0]));
        let mut g: Graph<f64> = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let s = g.sum(w).unwrap();
        g.backward(s, &mut [&mut store]).unwrap();
        assert_eq!(
            store.get("w").unwrap().grad.as_ref().unwrap().data,
            vec![1.0; 4]
        );

        let mut g2: Graph<f64> = Graph::new();
        let w2 = g2.param(&store, "w").unwrap();
        assert!(matches!(
            g2.backward(w2, &mut [&mut store]),
            Err(Error::NonScalarRoot { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn param_reuse_accumulates_gradients_from_both_paths() {
        // loss = sum(x*w) + sum(z*w); d/dw = x^T 1 + z^T 1
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("w", t(2, 1, &[1.0, 1.0]));
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(1, 2, &[2.0, 3.0]));
        let z = g.constant(t(1, 2, &[10.0, 20.0]));
        let w1 = g.param(&store, "w").unwrap();
        let w2 = g.param(&store, "w").unwrap();
        assert_eq!(w1, w2, "same parameter must lease to one node");
        let a = g.matmul(x, w1).unwrap();
        let b = g.matmul(z, w2).unwrap();
        let s = g.add(a, b).unwrap();
        g.backward(s, &mut [&mut store]).unwrap();
        assert_eq!(
            store.get("w").unwrap().grad.as_ref().unwrap().data,
            vec![12.0, 23.0]
        );
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("w", t(1, 2, &[1.0, 2.0]));
        store.get_mut("w").unwrap().requires_grad = false;
        let mut g: Graph<f64> = Graph::new();
        let w = g.param(&store, "w").unwrap();
        let s = g.sum(w).unwrap();
        g.backward(s, &mut [&mut store]).unwrap();
        assert!(store.get("w").unwrap().grad.is_none());
    }

    #[test]
    fn backward_twice_is_bitwise_identical() {
        let run = || {
            let mut store: ParamStore<f64> = ParamStore::new();
            store.insert("w", t(2, 2, &[0.4, -0.3, 0.9, 0.1]));
            store.insert("g", t(1, 2, &[1.0, 1.0]));
            let mut g: Graph<f64> = Graph::new();
            let w = g.param(&store, "w").unwrap();
            let gain = g.param(&store, "g").unwrap();
            let n = g.rms_norm(w, gain, 1e-6).unwrap();
            let sm = g.softmax(n).unwrap();
            let s = g.sum(sm).unwrap();
            let sq = g.mul(s, s).unwrap();
            g.backward(sq, &mut [&mut store]).unwrap();
            store.get("w").unwrap().grad.as_ref().unwrap().data.clone()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_and_scale_compose() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(t(1, 4, &[1.0, 2.0, 3.0, 4.0]));
        let m = g.mean(x).unwrap();
        assert_eq!(g.value(m).data[0], 2.5);
        let s = g.scale(m, -2.0).unwrap();
        assert_eq!(g.value(s).data[0], -5.0);
    }
}
