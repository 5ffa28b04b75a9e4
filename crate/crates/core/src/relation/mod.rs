//! The group relation aggregator and the local aggregators it is compared
//! against.
//!
//! For a centroid `x_i` and each neighbor `x_ij` of its group, GRA computes
//!
//! ```text
//! R   = [ω(α(p_i, p_ij)), θ(f_i, f_ij)]       relation vector
//! H   = M(R) ⊗ γ(f_ij)                        cross-channel attention
//! y_i = L(A_j H)                              aggregate over the group, expand
//! ```
//!
//! where `α` is a fixed geometric descriptor, `θ` combines linear maps
//! `η(f_i)` and `μ(f_ij)`, `M` is `Linear → ReLU → Linear` producing `K`
//! attention maps, and `⊗` multiplies each map into its own contiguous block
//! of `C″/K` value channels. The relation branch runs at `C′ = C/r1` channels
//! and the value branch at `C″ = C/r2` channels.

mod baselines;
mod config;
mod count;
mod gra;
pub mod ops;

pub use baselines::{rsconv_forward, rsconv_forward_counted, sa_forward, sa_forward_counted, RsConvParams, SaParams};
pub use config::{GeometricRelationSpec, GraConfig, SemanticCombinator};
pub use count::{
    count_flops, count_flops_linears, count_flops_rsconv, count_flops_sa, count_params,
    count_params_linears, count_params_rsconv, count_params_sa,
};
pub use gra::{
    cross_channel_apply, geometric_relation_alpha, gra_backward, gra_forward, gra_forward_cached,
    gra_forward_counted, relation_r, semantic_relation_theta, weight_mlp_m, GraCache, GraGrads,
    GraParams, GroupInput,
};
pub(crate) use gra::forward_impl as gra_forward_impl;
