use crate::error::{Error, Result};

use super::{Graph, ParamStore, Var};

/// Anything whose trainable parameters can be gradient-checked. Bare stores
/// qualify, as do whole models that own one.
pub trait HasParams {
    fn params_mut(&mut self) -> &mut ParamStore<f64>;
}

impl HasParams for ParamStore<f64> {
    fn params_mut(&mut self) -> &mut ParamStore<f64> {
        self
    }
}

/// Compares analytic gradients against two-sided finite differences in f64.
///
/// `build` must deterministically construct the loss graph from the given
/// targets; it is called once for the analytic pass and twice per perturbed
/// parameter element. Returns the maximum relative error
/// |analytic - numeric| / max(1, |numeric|) over all trainable elements.
pub fn finite_diff_check<T, B>(targets: &mut [&mut T], h: f64, mut build: B) -> Result<f64>
where
    T: HasParams,
    B: FnMut(&mut Graph<f64>, &[&T]) -> Result<Var>,
{
    for t in targets.iter_mut() {
        t.params_mut().zero_grad();
    }

    {
        let shared: Vec<&T> = targets.iter().map(|t| &**t).collect();
        let mut g: Graph<f64> = Graph::new();
        let root = build(&mut g, &shared)?;
        let (r, c) = g.shape(root);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarRoot { rows: r, cols: c });
        }
        drop(shared);
        let mut stores: Vec<&mut ParamStore<f64>> = targets
            .iter_mut()
            .map(|t| t.params_mut())
            .collect();
        g.backward(root, &mut stores)?;
    }

    let mut analytic: Vec<Vec<(String, Vec<f64>)>> = Vec::new();
    for t in targets.iter_mut() {
        let mut per_store = Vec::new();
        for (name, p) in t.params_mut().iter() {
            if !p.requires_grad {
                continue;
            }
            let g = p
                .grad
                .as_ref()
                .map(|t| t.data.clone())
                .unwrap_or_else(|| vec![0.0; p.value.data.len()]);
            per_store.push((name.clone(), g));
        }
        analytic.push(per_store);
    }

    let mut max_rel = 0.0f64;
    for ti in 0..targets.len() {
        for (name, grad) in analytic[ti].clone() {
            for idx in 0..grad.len() {
                let orig = targets[ti].params_mut().get(&name)?.value.data[idx];

                targets[ti].params_mut().get_mut(&name)?.value.data[idx] = orig + h;
                let f_plus = eval(targets, &mut build)?;
                targets[ti].params_mut().get_mut(&name)?.value.data[idx] = orig - h;
                let f_minus = eval(targets, &mut build)?;
                targets[ti].params_mut().get_mut(&name)?.value.data[idx] = orig;

                let numeric = (f_plus - f_minus) / (2.0 * h);
                let rel = (grad[idx] - numeric).abs() / numeric.abs().max(1.0);
                if rel > max_rel {
                    max_rel = rel;
                }
            }
        }
    }
    Ok(max_rel)
}

fn eval<T, B>(targets: &mut [&mut T], build: &mut B) -> Result<f64>
where
    T: HasParams,
    B: FnMut(&mut Graph<f64>, &[&T]) -> Result<Var>,
{
    let shared: Vec<&T> = targets.iter().map(|t| &**t).collect();
    let mut g: Graph<f64> = Graph::new();
    let root = build(&mut g, &shared)?;
    Ok(g.value(root).data[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn passes_on_a_composite_graph() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("w", Tensor::new(2, 2, vec![0.3, -0.7, 0.2, 0.9]));
        store.insert("u", Tensor::new(1, 2, vec![0.5, -0.1]));
        store.insert("gain", Tensor::new(1, 2, vec![1.1, 0.9]));

        let max_rel = finite_diff_check(&mut [&mut store], 1e-5, |g, stores| {
            let s = stores[0];
            let w = g.param(s, "w")?;
            let u = g.param(s, "u")?;
            let gain = g.param(s, "gain")?;
            let h = g.matmul(u, w)?;
            let n = g.rms_norm(h, gain, 1e-6)?;
            let act = g.silu(n)?;
            let sm = g.softmax(act)?;
            let c = g.cosine(sm, u)?;
            let sp = g.softplus(c)?;
            g.sum(sp)
        })
        .unwrap();
        assert!(max_rel < 1e-7, "max relative error {max_rel}");
    }

    #[test]
    fn passes_on_an_attention_shaped_graph() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("emb", Tensor::new(5, 4, vec![
            0.1, -0.2, 0.3, 0.05,
            0.7, 0.2, -0.4, 0.6,
            -0.3, 0.9, 0.2, -0.1,
            0.4, -0.6, 0.8, 0.3,
            0.2, 0.1, -0.5, 0.7,
        ]));
        store.insert("wq", Tensor::new(4, 4, vec![
            0.2, -0.1, 0.3, 0.4, -0.2, 0.5, 0.1, -0.3,
            0.6, 0.2, -0.4, 0.1, 0.3, -0.5, 0.2, 0.4,
        ]));
        store.insert("wk", Tensor::new(4, 4, vec![
            -0.3, 0.4, 0.1, 0.2, 0.5, -0.1, 0.3, -0.2,
            0.2, 0.6, -0.3, 0.1, -0.4, 0.2, 0.5, 0.3,
        ]));
        store.insert("b", Tensor::new(1, 4, vec![0.05, -0.02, 0.1, 0.0]));

        let max_rel = finite_diff_check(&mut [&mut store], 1e-5, |g, stores| {
            let s = stores[0];
            let emb = g.param(s, "emb")?;
            let wq = g.param(s, "wq")?;
            let wk = g.param(s, "wk")?;
            let b = g.param(s, "b")?;
            let x = g.embed(emb, &[1, 3, 0, 3])?;
            let x = g.bias_add(x, b)?;
            let q = g.matmul(x, wq)?;
            let k = g.matmul(x, wk)?;
            let q = g.rope(q, 10000.0)?;
            let k = g.rope(k, 10000.0)?;
            let kt = g.transpose(k)?;
            let scores = g.matmul(q, kt)?;
            let scores = g.scale(scores, 0.5)?;
            let masked = g.causal_mask(scores)?;
            let attn = g.softmax(masked)?;
            let half = g.slice_cols(attn, 0, 2)?;
            let rest = g.slice_cols(attn, 2, 2)?;
            let joined = g.concat_cols(&[half, rest])?;
            let top = g.slice_rows(joined, 0, 2)?;
            let bot = g.slice_rows(joined, 2, 2)?;
            let prod = g.mul(top, bot)?;
            g.sum(prod)
        })
        .unwrap();
        assert!(max_rel < 1e-7, "max relative error {max_rel}");
    }

    #[test]
    fn catches_a_wrong_gradient() {
        // Deliberately mis-specified loss: analytic pass sees sum(w), numeric
        // passes see sum(w*w) via a closure that cheats on call parity.
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("w", Tensor::new(1, 2, vec![0.4, 0.8]));
        let mut calls = 0;
        let max_rel = finite_diff_check(&mut [&mut store], 1e-5, move |g, stores| {
            calls += 1;
            let w = g.param(stores[0], "w")?;
            if calls == 1 {
                g.sum(w)
            } else {
                let sq = g.mul(w, w)?;
                g.sum(sq)
            }
        })
        .unwrap();
        assert!(max_rel > 1e-2, "expected a detectable mismatch, got {max_rel}");
    }

    #[test]
    fn respects_frozen_parameters() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("a", Tensor::new(1, 2, vec![0.4, 0.8]));
        store.insert("b", Tensor::new(1, 2, vec![1.0, -1.0]));
        store.get_mut("b").unwrap().requires_grad = false;
        // Only `a` participates in the check.
        let max_rel = finite_diff_check(&mut [&mut store], 1e-5, |g, stores| {
            let a = g.param(stores[0], "a")?;
            let b = g.param(stores[0], "b")?;
            let p = g.mul(a, b)?;
            g.sum(p)
        })
        .unwrap();
        assert!(max_rel < 1e-9);
        assert!(store.get("b").unwrap().grad.is_none());
    }
}
