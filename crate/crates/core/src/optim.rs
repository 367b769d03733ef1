//! Adam optimizer over one or more parameter stores. Moment state is keyed
//! by store label and parameter name so the same optimizer can drive a
//! compressor and a reranker together.

use std::collections::BTreeMap;

use crate::tensor::{ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor<f32>, Tensor<f32>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter that accumulated a gradient this
    /// round. Parameters without gradients (frozen, or unused in the graph)
    /// keep their bits. Gradients are left in place; callers zero them.
    pub fn step(&mut self, stores: &mut [(&str, &mut ParamStore<f32>)]) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1 as f32;
        let b2 = self.cfg.beta2 as f32;
        let bias1 = 1.0 - (self.cfg.beta1 as f32).powi(t);
        let bias2 = 1.0 - (self.cfg.beta2 as f32).powi(t);
        let lr = self.cfg.lr as f32;
        let eps = self.cfg.eps as f32;
        for (label, store) in stores.iter_mut() {
            for (name, param) in store.iter_mut() {
                let Some(grad) = param.grad.as_ref() else {
                    continue;
                };
                let key = format!("{label}:{name}");
                let (m, v) = self.moments.entry(key).or_insert_with(|| {
                    (
                        Tensor::zeros(grad.rows, grad.cols),
                        Tensor::zeros(grad.rows, grad.cols),
                    )
                });
                for i in 0..grad.data.len() {
                    let g = grad.data[i];
                    m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
                    v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
                    let m_hat = m.data[i] / bias1;
                    let v_hat = v.data[i] / bias2;
                    param.value.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
