//! Set abstraction and relation-shape convolution, the aggregators GRA is
//! measured against.

use super::config::GeometricRelationSpec;
use super::gra::GroupInput;
use crate::error::{Error, Result};
use crate::nn::{Flops, Linear, Params};
use crate::rng::Rng;
use crate::tensor::{reduce, ReduceKind, Tensor};

/// Pointwise MLP (ReLU between layers, none after the last) followed by
/// max-pooling over the group, optionally followed by a linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct SaParams {
    pub mlp: Vec<Linear>,
    pub post: Option<Linear>,
}

impl SaParams {
    pub fn init(c_in: usize, widths: &[usize], post: Option<usize>, rng: &mut Rng) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::config("SA needs at least one MLP layer"));
        }
        let mut mlp = Vec::with_capacity(widths.len());
        let mut prev = c_in;
        for &w in widths {
            mlp.push(Linear::init(prev, w, rng));
            prev = w;
        }
        let post = post.map(|o| Linear::init(prev, o, rng));
        Ok(SaParams { mlp, post })
    }

    pub fn c_out(&self) -> usize {
        self.post.as_ref().unwrap_or_else(|| self.mlp.last().expect("non-empty")).fan_out()
    }
}

impl Params for SaParams {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.mlp.visit(&format!("{p}.mlp"), f);
        self.post.visit(&format!("{p}.post"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.mlp.visit_mut(&format!("{p}.mlp"), f);
        self.post.visit_mut(&format!("{p}.post"), f);
    }
}

/// `y_i = max_j MLP(f_ij)` (then `post`, when present).
pub fn sa_forward(f_ij: &Tensor, params: &SaParams) -> Result<Tensor> {
    sa_forward_counted(f_ij, params, &mut Flops::default())
}

pub fn sa_forward_counted(f_ij: &Tensor, params: &SaParams, flops: &mut Flops) -> Result<Tensor> {
    let (n, g) = match *f_ij.shape() {
        [n, g, _] => (n, g),
        ref s => return Err(Error::Dimension { op: "sa_forward", lhs: s.to_vec(), rhs: vec![0, 0, 0] }),
    };
    if g == 0 {
        return Err(Error::EmptyGroup("sa_forward"));
    }
    let mut x = f_ij.clone();
    for (li, layer) in params.mlp.iter().enumerate() {
        x = layer.forward_counted(&x, flops)?;
        if li + 1 < params.mlp.len() {
            x = crate::tensor::relu(&x);
            flops.elementwise(x.len());
        }
    }
    flops.elementwise(x.len());
    let pooled = reduce(ReduceKind::Max, &x, 1)?.value;
    debug_assert_eq!(pooled.shape()[0], n);
    match &params.post {
        Some(post) => post.forward_counted(&pooled, flops),
        None => Ok(pooled),
    }
}

/// Relation-shape convolution: an MLP on the geometric relation produces
/// per-channel weights for each neighbor's features; weighted features are
/// max-pooled and raised to `C_out` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RsConvParams {
    pub geo: GeometricRelationSpec,
    /// `D_g → hidden`
    pub rel1: Linear,
    /// `hidden → C`
    pub rel2: Linear,
    /// Channel-raising map `C → C_out`.
    pub raise: Linear,
}

impl RsConvParams {
    pub fn init(geo: GeometricRelationSpec, c_in: usize, hidden: usize, c_out: usize, rng: &mut Rng) -> Result<Self> {
        geo.validate()?;
        Ok(RsConvParams {
            geo,
            rel1: Linear::init(geo.dim(), hidden, rng),
            rel2: Linear::init(hidden, c_in, rng),
            raise: Linear::init(c_in, c_out, rng),
        })
    }
}

impl Params for RsConvParams {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.rel1.visit(&format!("{p}.rel1"), f);
        self.rel2.visit(&format!("{p}.rel2"), f);
        self.raise.visit(&format!("{p}.raise"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.rel1.visit_mut(&format!("{p}.rel1"), f);
        self.rel2.visit_mut(&format!("{p}.rel2"), f);
        self.raise.visit_mut(&format!("{p}.raise"), f);
    }
}

pub fn rsconv_forward(input: GroupInput<'_>, params: &RsConvParams) -> Result<Tensor> {
    rsconv_forward_counted(input, params, &mut Flops::default())
}

pub fn rsconv_forward_counted(input: GroupInput<'_>, params: &RsConvParams, flops: &mut Flops) -> Result<Tensor> {
    let (n, g, c) = input.dims()?;
    if params.rel2.fan_out() != c {
        return Err(Error::Dimension { op: "rsconv", lhs: vec![c], rhs: vec![params.rel2.fan_out()] });
    }
    let alpha = super::gra::geometric_relation_alpha(input.p_i, input.p_ij, &params.geo)?;
    flops.elementwise(alpha.len());
    let h = crate::tensor::relu(&params.rel1.forward_counted(&alpha, flops)?);
    flops.elementwise(h.len());
    let w = crate::tensor::relu(&params.rel2.forward_counted(&h, flops)?);
    flops.elementwise(w.len());
    let weighted = crate::tensor::mul(&w, input.f_ij)?;
    flops.elementwise(weighted.len());
    flops.elementwise(weighted.len());
    let pooled = reduce(ReduceKind::Max, &weighted, 1)?.value;
    debug_assert_eq!(pooled.shape(), &[n, c]);
    let _ = g;
    params.raise.forward_counted(&pooled, flops)
}
