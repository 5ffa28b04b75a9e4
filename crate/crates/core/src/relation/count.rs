//! Closed-form parameter and multiply-accumulate counts.
//!
//! These follow the [`Flops`](crate::nn::Flops) conventions and are written
//! independently of the forward code, so the instrumented forwards act as a
//! check on them.

use super::config::{GeometricRelationSpec, GraConfig, SemanticCombinator};

fn linear_params(i: usize, o: usize) -> usize {
    i * o + o
}

/// Trainable scalars in a stack of linear layers given as `(in, out)`.
pub fn count_params_linears(layers: &[(usize, usize)]) -> usize {
    layers.iter().map(|&(i, o)| linear_params(i, o)).sum()
}

/// MACs of a stack of linear layers applied to `rows` rows (no activations).
pub fn count_flops_linears(rows: usize, layers: &[(usize, usize)]) -> u64 {
    layers.iter().map(|&(i, o)| (rows * i * o) as u64).sum()
}

fn gra_layers(cfg: &GraConfig) -> Vec<(usize, usize)> {
    let (c, cr, cv) = (cfg.c_in, cfg.c_rel(), cfg.c_val());
    let mut v = Vec::new();
    if !cfg.uniform_attention {
        if cfg.sem != SemanticCombinator::None {
            v.push((c, cr));
            v.push((c, cr));
        }
        v.push((cfg.geo.dim(), cr));
        v.push((cfg.m_in(), cfg.m_hidden()));
        v.push((cfg.m_hidden(), cfg.k));
    }
    v.push((c, cv));
    v.push((cv, cfg.c_out));
    v
}

pub fn count_params(cfg: &GraConfig) -> usize {
    count_params_linears(&gra_layers(cfg))
}

/// MACs for one GRA forward over `n` groups of `g` neighbors.
pub fn count_flops(cfg: &GraConfig, n: usize, g: usize) -> u64 {
    let rows = (n * g) as u64;
    let (c, cr, cv, k) = (cfg.c_in as u64, cfg.c_rel() as u64, cfg.c_val() as u64, cfg.k as u64);
    let mut total = rows * c * cv // γ
        + rows * cv // aggregation
        + n as u64 * cv * cfg.c_out as u64; // L
    if !cfg.uniform_attention {
        let dg = cfg.geo.dim() as u64;
        let (win, hid) = (cfg.m_in() as u64, cfg.m_hidden() as u64);
        total += rows * dg // α
            + rows * dg * cr // ω
            + rows * win * hid + rows * hid // M first layer + relu
            + rows * hid * k // M second layer
            + rows * cv; // ⊗
        if cfg.normalize {
            total += rows * k;
        }
        if cfg.sem != SemanticCombinator::None {
            total += n as u64 * c * cr // η on centroids
                + rows * c * cr; // μ on neighbors
            if cfg.sem != SemanticCombinator::Concatenation {
                total += rows * cr;
            }
        }
    }
    total
}

/// SA block: pointwise MLP of `widths` on `c_in` inputs, plus optional post map.
pub fn count_params_sa(c_in: usize, widths: &[usize], post: Option<usize>) -> usize {
    let mut layers = Vec::new();
    let mut prev = c_in;
    for &w in widths {
        layers.push((prev, w));
        prev = w;
    }
    if let Some(o) = post {
        layers.push((prev, o));
    }
    count_params_linears(&layers)
}

pub fn count_flops_sa(c_in: usize, widths: &[usize], post: Option<usize>, n: usize, g: usize) -> u64 {
    let rows = n * g;
    let mut total = 0u64;
    let mut prev = c_in;
    for (li, &w) in widths.iter().enumerate() {
        total += (rows * prev * w) as u64;
        if li + 1 < widths.len() {
            total += (rows * w) as u64;
        }
        prev = w;
    }
    total += (rows * prev) as u64; // max-pool
    if let Some(o) = post {
        total += (n * prev * o) as u64;
    }
    total
}

pub fn count_params_rsconv(geo: &GeometricRelationSpec, c_in: usize, hidden: usize, c_out: usize) -> usize {
    count_params_linears(&[(geo.dim(), hidden), (hidden, c_in), (c_in, c_out)])
}

pub fn count_flops_rsconv(geo: &GeometricRelationSpec, c_in: usize, hidden: usize, c_out: usize, n: usize, g: usize) -> u64 {
    let rows = (n * g) as u64;
    let (dg, h, c) = (geo.dim() as u64, hidden as u64, c_in as u64);
    rows * dg + rows * dg * h + rows * h + rows * h * c + rows * c + 2 * rows * c + n as u64 * c * c_out as u64
}
