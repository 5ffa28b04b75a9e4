//! GRA as a [`DiffOp`] so the whole block can be finite-difference checked.

use super::config::{GraConfig, SemanticCombinator};
use super::gra::{gra_backward, gra_forward_cached, GraParams, GroupInput};
use crate::error::Result;
use crate::nn::Params;
use crate::rng::{stream, Rng};
use crate::tensor::gradcheck::{random_tensor, DiffOp};
use crate::tensor::{ReduceKind, Tensor};

/// Inputs are `[f_i, f_ij, <every GRA parameter in visiting order>]`;
/// coordinates are fixed when the op is built.
pub struct GraOp {
    pub cfg: GraConfig,
    pub n: usize,
    pub g: usize,
    p_i: Tensor,
    p_ij: Tensor,
    template: GraParams,
}

impl GraOp {
    pub fn new(cfg: GraConfig, n: usize, g: usize, coord_seed: u64) -> Result<Self> {
        let mut rng = stream(coord_seed, "gra-op-coords").rng();
        let p_i = random_tensor(&mut rng, &[n, 3]);
        let p_ij = random_tensor(&mut rng, &[n, g, 3]);
        let template = GraParams::init(&cfg, &mut rng)?;
        Ok(GraOp { cfg, n, g, p_i, p_ij, template })
    }

    fn params_from(&self, inputs: &[Tensor]) -> GraParams {
        let mut p = self.template.clone();
        let mut it = inputs[2..].iter();
        p.visit_mut("", &mut |_, t| *t = it.next().expect("parameter count").clone());
        p
    }
}

impl DiffOp for GraOp {
    fn name(&self) -> String {
        format!(
            "gra[C={} K={} sem={} agg={}{}]",
            self.cfg.c_in,
            self.cfg.k,
            self.cfg.sem.short_name(),
            self.cfg.agg.name(),
            if self.cfg.normalize { " softmax" } else { "" }
        )
    }

    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        let p = self.params_from(x);
        let input = GroupInput { f_i: &x[0], f_ij: &x[1], p_i: &self.p_i, p_ij: &self.p_ij };
        Ok(gra_forward_cached(input, &self.cfg, &p)?.0)
    }

    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let p = self.params_from(x);
        let input = GroupInput { f_i: &x[0], f_ij: &x[1], p_i: &self.p_i, p_ij: &self.p_ij };
        let (_, cache) = gra_forward_cached(input, &self.cfg, &p)?;
        let g = gra_backward(input, &self.cfg, &p, Some(&cache), dy)?;
        let mut out = vec![g.d_f_i, g.d_f_ij];
        g.params.visit("", &mut |_, t| out.push(t.clone()));
        Ok(out)
    }

    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        let c = self.cfg.c_in;
        let mut v = vec![random_tensor(rng, &[self.n, c]), random_tensor(rng, &[self.n, self.g, c])];
        let p = GraParams::init(&self.cfg, rng).expect("validated at construction");
        p.visit("", &mut |_, t| v.push(t.clone()));
        v
    }

    fn kink_signature(&self, x: &[Tensor]) -> Vec<u64> {
        let p = self.params_from(x);
        let input = GroupInput { f_i: &x[0], f_ij: &x[1], p_i: &self.p_i, p_ij: &self.p_ij };
        gra_forward_cached(input, &self.cfg, &p).map(|(_, c)| c.kink_signature()).unwrap_or_default()
    }
}

/// The GRA variants certified by the gradient checker: default block, every
/// semantic combinator, every aggregation, softmax normalization, K=1 and the
/// uniform-attention degenerate form.
pub fn gra_registry() -> Vec<Box<dyn DiffOp>> {
    let base = GraConfig { m_hidden: Some(8), ..GraConfig::new(32, 12, 5) };
    let mut cfgs = vec![base];
    for sem in [
        SemanticCombinator::Subtraction,
        SemanticCombinator::Concatenation,
        SemanticCombinator::Hadamard,
        SemanticCombinator::None,
    ] {
        cfgs.push(GraConfig { sem, ..base });
    }
    for agg in [ReduceKind::Mean, ReduceKind::Sum] {
        cfgs.push(GraConfig { agg, ..base });
    }
    cfgs.push(GraConfig { normalize: true, ..base });
    cfgs.push(GraConfig { k: 1, ..base });
    cfgs.push(GraConfig { uniform_attention: true, ..base });
    cfgs.into_iter()
        .enumerate()
        .map(|(i, cfg)| Box::new(GraOp::new(cfg, 3, 5, i as u64).expect("static config")) as Box<dyn DiffOp>)
        .collect()
}
