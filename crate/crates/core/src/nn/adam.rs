use serde::{Deserialize, Serialize};

use super::{ParamSet, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    m: ParamSet<F>,
    v: ParamSet<F>,
    t: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, params: &ParamSet<F>) -> Self {
        Self { config, m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &ParamSet<F>) {
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (F::of_f64(c.beta1), F::of_f64(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let step = F::of_f64(c.lr * bc2.sqrt() / bc1);
        let eps = F::of_f64(c.eps * bc2.sqrt());
        for (i, g) in grads.tensors.iter().enumerate() {
            let m = &mut self.m.tensors[i].data;
            let v = &mut self.v.tensors[i].data;
            let p = &mut params.tensors[i].data;
            for j in 0..g.data.len() {
                let gj = g.data[j];
                m[j] = b1 * m[j] + (F::one() - b1) * gj;
                v[j] = b2 * v[j] + (F::one() - b2) * gj * gj;
                p[j] -= step * m[j] / (v[j].sqrt() + eps);
            }
        }
    }
}
