//! Adam with a step-decay learning-rate schedule.

use super::Params;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `lr(e) = initial · factor^floor(e / every)`
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { initial: 0.001, decay_factor: 0.7, decay_every: 20 }
    }
}

impl LrSchedule {
    pub fn at_epoch(&self, epoch: usize) -> f64 {
        self.initial * self.decay_factor.powi((epoch / self.decay_every.max(1)) as i32)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    /// One update of `params` from `grads` (same structure). Every gradient is
    /// checked before anything is modified, so a NaN leaves params untouched.
    pub fn step<P: Params>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let mut g = Vec::new();
        let mut bad = None;
        grads.visit("", &mut |name, t| {
            if bad.is_none() && !t.all_finite() {
                bad = Some(name.trim_start_matches('.').to_string());
            }
            g.push(t.clone());
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of parameter {name}")));
        }
        if self.m.is_empty() {
            self.m = g.iter().map(Tensor::zeros_like).collect();
            self.v = g.iter().map(Tensor::zeros_like).collect();
        }
        if self.m.len() != g.len() {
            return Err(Error::State(format!("optimizer tracks {} tensors, got {}", self.m.len(), g.len())));
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut i = 0;
        let mut err = None;
        params.visit_mut("", &mut |name, w| {
            if err.is_some() {
                return;
            }
            let gi = &g[i];
            if gi.shape() != w.shape() {
                err = Some(Error::Dimension { op: "adam", lhs: w.shape().to_vec(), rhs: gi.shape().to_vec() });
                let _ = name;
                return;
            }
            let (m, v) = (ms[i].data_mut(), vs[i].data_mut());
            for (((wj, &gj), mj), vj) in w.data_mut().iter_mut().zip(gi.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mj = b1 * *mj + (1.0 - b1) * gj;
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
                *wj -= lr * (*mj / c1) / ((*vj / c2).sqrt() + eps);
            }
            i += 1;
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
