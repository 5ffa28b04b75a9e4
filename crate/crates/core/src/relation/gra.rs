use super::config::{GeometricRelationSpec, GraConfig, SemanticCombinator};
use crate::error::{Error, Result};
use crate::nn::{Flops, Linear, Params};
use crate::rng::Rng;
use crate::tensor::{reduce, reduce_backward, Tensor};

/// The tensors describing a batch of groups.
#[derive(Debug, Clone, Copy)]
pub struct GroupInput<'a> {
    /// Centroid features `[N'×C]`.
    pub f_i: &'a Tensor,
    /// Neighbor features `[N'×G×C]`.
    pub f_ij: &'a Tensor,
    /// Centroid coordinates `[N'×3]`.
    pub p_i: &'a Tensor,
    /// Neighbor coordinates `[N'×G×3]`.
    pub p_ij: &'a Tensor,
}

impl GroupInput<'_> {
    /// `(N', G, C)`
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let (n, g, c) = match *self.f_ij.shape() {
            [n, g, c] => (n, g, c),
            ref s => return Err(Error::Dimension { op: "GRA f_ij", lhs: s.to_vec(), rhs: vec![0, 0, 0] }),
        };
        self.f_i.expect_shape("GRA f_i", &[n, c])?;
        self.p_i.expect_shape("GRA p_i", &[n, 3])?;
        self.p_ij.expect_shape("GRA p_ij", &[n, g, 3])?;
        if g == 0 {
            return Err(Error::EmptyGroup("GRA"));
        }
        Ok((n, g, c))
    }
}

/// Trainable weights of one GRA block. Relation-branch layers are absent
/// when the configuration does not use them.
#[derive(Debug, Clone, PartialEq)]
pub struct GraParams {
    pub eta: Option<Linear>,
    pub mu: Option<Linear>,
    pub omega: Option<Linear>,
    pub m1: Option<Linear>,
    pub m2: Option<Linear>,
    pub gamma: Linear,
    pub out: Linear,
}

impl GraParams {
    pub fn init(cfg: &GraConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (c, cr, cv) = (cfg.c_in, cfg.c_rel(), cfg.c_val());
        let relation = !cfg.uniform_attention;
        let semantic = relation && cfg.sem != SemanticCombinator::None;
        let mut layer = |on: bool, i: usize, o: usize| on.then(|| Linear::init(i, o, rng));
        let eta = layer(semantic, c, cr);
        let mu = layer(semantic, c, cr);
        let omega = layer(relation, cfg.geo.dim(), cr);
        let m1 = layer(relation, cfg.m_in(), cfg.m_hidden());
        let m2 = layer(relation, cfg.m_hidden(), cfg.k);
        let gamma = Linear::init(c, cv, rng);
        let out = Linear::init(cv, cfg.c_out, rng);
        Ok(GraParams { eta, mu, omega, m1, m2, gamma, out })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |l: &Option<Linear>| l.as_ref().map(Linear::zeros_like);
        GraParams {
            eta: z(&self.eta),
            mu: z(&self.mu),
            omega: z(&self.omega),
            m1: z(&self.m1),
            m2: z(&self.m2),
            gamma: self.gamma.zeros_like(),
            out: self.out.zeros_like(),
        }
    }

    fn check(&self, cfg: &GraConfig) -> Result<()> {
        let shape_ok = |l: &Option<Linear>, want: Option<(usize, usize)>| match (l, want) {
            (None, None) => true,
            (Some(l), Some((i, o))) => l.fan_in() == i && l.fan_out() == o,
            _ => false,
        };
        let (c, cr, cv) = (cfg.c_in, cfg.c_rel(), cfg.c_val());
        let relation = !cfg.uniform_attention;
        let semantic = relation && cfg.sem != SemanticCombinator::None;
        let ok = shape_ok(&self.eta, semantic.then_some((c, cr)))
            && shape_ok(&self.mu, semantic.then_some((c, cr)))
            && shape_ok(&self.omega, relation.then_some((cfg.geo.dim(), cr)))
            && shape_ok(&self.m1, relation.then_some((cfg.m_in(), cfg.m_hidden())))
            && shape_ok(&self.m2, relation.then_some((cfg.m_hidden(), cfg.k)))
            && self.gamma.fan_in() == c
            && self.gamma.fan_out() == cv
            && self.out.fan_in() == cv
            && self.out.fan_out() == cfg.c_out;
        if !ok {
            return Err(Error::config("GRA parameters do not match configuration"));
        }
        Ok(())
    }
}

impl Params for GraParams {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.eta.visit(&format!("{p}.eta"), f);
        self.mu.visit(&format!("{p}.mu"), f);
        self.omega.visit(&format!("{p}.omega"), f);
        self.m1.visit(&format!("{p}.m1"), f);
        self.m2.visit(&format!("{p}.m2"), f);
        self.gamma.visit(&format!("{p}.gamma"), f);
        self.out.visit(&format!("{p}.out"), f);
    }

    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.eta.visit_mut(&format!("{p}.eta"), f);
        self.mu.visit_mut(&format!("{p}.mu"), f);
        self.omega.visit_mut(&format!("{p}.omega"), f);
        self.m1.visit_mut(&format!("{p}.m1"), f);
        self.m2.visit_mut(&format!("{p}.m2"), f);
        self.gamma.visit_mut(&format!("{p}.gamma"), f);
        self.out.visit_mut(&format!("{p}.out"), f);
    }
}

/// Gradients produced by [`gra_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraGrads {
    pub params: GraParams,
    /// `[N'×C]`
    pub d_f_i: Tensor,
    /// `[N'×G×C]`
    pub d_f_ij: Tensor,
}

/// Forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct GraCache {
    n: usize,
    g: usize,
    alpha: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    r: Vec<f64>,
    pre: Vec<f64>,
    hid: Vec<f64>,
    weights: Vec<f64>,
    v: Vec<f64>,
    argmax: Option<Vec<usize>>,
    a: Vec<f64>,
}

impl GraCache {
    /// Relu activation pattern of `M` plus aggregation argmax; changes in
    /// this signature mark non-smooth points.
    pub fn kink_signature(&self) -> Vec<u64> {
        self.pre
            .iter()
            .map(|&x| (x > 0.0) as u64)
            .chain(self.argmax.iter().flatten().map(|&i| i as u64))
            .collect()
    }

    /// Attention weights `[N'·G×K]` after optional normalization (empty for
    /// uniform attention).
    pub fn attention(&self) -> &[f64] {
        &self.weights
    }

    pub fn group_shape(&self) -> (usize, usize) {
        (self.n, self.g)
    }
}

fn alpha_rows(p_i: &[f64], p_ij: &[f64], n: usize, g: usize, geo: &GeometricRelationSpec) -> Vec<f64> {
    let dg = geo.dim();
    let mut out = Vec::with_capacity(n * g * dg);
    for i in 0..n {
        let pi = &p_i[i * 3..i * 3 + 3];
        for j in 0..g {
            let pj = &p_ij[(i * g + j) * 3..(i * g + j) * 3 + 3];
            let d = [pi[0] - pj[0], pi[1] - pj[1], pi[2] - pj[2]];
            if geo.use_l2 {
                out.push((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
            }
            if geo.use_l1 {
                out.push(d[0].abs() + d[1].abs() + d[2].abs());
            }
            if geo.use_abs {
                out.extend_from_slice(pi);
                out.extend_from_slice(pj);
            }
            if geo.use_diff {
                out.extend_from_slice(&d);
            }
        }
    }
    out
}

/// Geometric relation `α` per (centroid, neighbor): `[N'×G×D_g]`.
pub fn geometric_relation_alpha(p_i: &Tensor, p_ij: &Tensor, geo: &GeometricRelationSpec) -> Result<Tensor> {
    geo.validate()?;
    let (n, g) = match *p_ij.shape() {
        [n, g, 3] => (n, g),
        ref s => return Err(Error::Dimension { op: "alpha", lhs: s.to_vec(), rhs: vec![0, 0, 3] }),
    };
    p_i.expect_shape("alpha p_i", &[n, 3])?;
    Ok(Tensor::from_parts(vec![n, g, geo.dim()], alpha_rows(p_i.data(), p_ij.data(), n, g, geo)))
}

fn combine_theta(eta: &[f64], mu: &[f64], n: usize, g: usize, cr: usize, kind: SemanticCombinator) -> Vec<f64> {
    let width = if kind == SemanticCombinator::Concatenation { 2 * cr } else { cr };
    let mut out = Vec::with_capacity(n * g * width);
    for i in 0..n {
        let e = &eta[i * cr..(i + 1) * cr];
        for j in 0..g {
            let m = &mu[(i * g + j) * cr..(i * g + j + 1) * cr];
            match kind {
                SemanticCombinator::Summation => out.extend(e.iter().zip(m).map(|(a, b)| a + b)),
                SemanticCombinator::Subtraction => out.extend(e.iter().zip(m).map(|(a, b)| a - b)),
                SemanticCombinator::Hadamard => out.extend(e.iter().zip(m).map(|(a, b)| a * b)),
                SemanticCombinator::Concatenation => {
                    out.extend_from_slice(e);
                    out.extend_from_slice(m);
                }
                SemanticCombinator::None => {}
            }
        }
    }
    out
}

/// Semantic relation `θ(f_i, f_ij)` from the linear maps `η`, `μ`.
pub fn semantic_relation_theta(
    f_i: &Tensor,
    f_ij: &Tensor,
    eta: &Linear,
    mu: &Linear,
    kind: SemanticCombinator,
) -> Result<Tensor> {
    if kind == SemanticCombinator::None {
        return Err(Error::config("θ requested with combinator `none`"));
    }
    let (n, g) = match *f_ij.shape() {
        [n, g, _] => (n, g),
        ref s => return Err(Error::Dimension { op: "theta", lhs: s.to_vec(), rhs: vec![0, 0, 0] }),
    };
    if f_i.rows() != n {
        return Err(Error::Dimension { op: "theta", lhs: f_i.shape().to_vec(), rhs: f_ij.shape().to_vec() });
    }
    if eta.fan_out() != mu.fan_out() {
        return Err(Error::config("η and μ must have matching output widths"));
    }
    let e = eta.forward(f_i)?;
    let m = mu.forward(f_ij)?;
    let cr = eta.fan_out();
    let data = combine_theta(e.data(), m.data(), n, g, cr, kind);
    let w = data.len() / (n * g).max(1);
    Ok(Tensor::from_parts(vec![n, g, w], data))
}

/// `R = [ω(α), θ]` along channels; `theta = None` gives `ω(α)` alone.
pub fn relation_r(alpha: &Tensor, theta: Option<&Tensor>, omega: &Linear) -> Result<Tensor> {
    let om = omega.forward(alpha)?;
    let Some(theta) = theta else { return Ok(om) };
    if theta.rows() != om.rows() {
        return Err(Error::Dimension { op: "relation_r", lhs: alpha.shape().to_vec(), rhs: theta.shape().to_vec() });
    }
    let (wo, wt) = (om.cols(), theta.cols());
    let mut data = Vec::with_capacity(om.rows() * (wo + wt));
    for r in 0..om.rows() {
        data.extend_from_slice(om.row(r));
        data.extend_from_slice(theta.row(r));
    }
    let mut shape = om.shape().to_vec();
    *shape.last_mut().unwrap() = wo + wt;
    Ok(Tensor::from_parts(shape, data))
}

/// `M(R) = Linear(ReLU(Linear(R)))`, raw attention logits `[..×K]`.
pub fn weight_mlp_m(r: &Tensor, m1: &Linear, m2: &Linear) -> Result<Tensor> {
    let h = crate::tensor::relu(&m1.forward(r)?);
    m2.forward(&h)
}

fn cross_channel_rows(w: &[f64], v: &[f64], rows: usize, k: usize, cv: usize) -> Vec<f64> {
    let s = cv / k;
    let mut out = Vec::with_capacity(rows * cv);
    for r in 0..rows {
        let wr = &w[r * k..(r + 1) * k];
        out.extend(v[r * cv..(r + 1) * cv].iter().enumerate().map(|(c, &x)| wr[c / s] * x));
    }
    out
}

/// Multiply attention map `k` into value channels `[k·C″/K, (k+1)·C″/K)`.
pub fn cross_channel_apply(weights: &Tensor, values: &Tensor) -> Result<Tensor> {
    let (k, cv) = (weights.cols(), values.cols());
    if weights.rows() != values.rows() {
        return Err(Error::Dimension {
            op: "cross_channel_apply",
            lhs: weights.shape().to_vec(),
            rhs: values.shape().to_vec(),
        });
    }
    if k == 0 || cv % k != 0 {
        return Err(Error::config(format!("K={k} does not divide C''={cv}")));
    }
    Ok(Tensor::from_parts(
        values.shape().to_vec(),
        cross_channel_rows(weights.data(), values.data(), values.rows(), k, cv),
    ))
}

fn softmax_over_group(logits: &[f64], n: usize, g: usize, k: usize) -> Vec<f64> {
    let mut w = logits.to_vec();
    for i in 0..n {
        for m in 0..k {
            let at = |j: usize| (i * g + j) * k + m;
            let mx = (0..g).map(|j| logits[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..g {
                let e = (logits[at(j)] - mx).exp();
                w[at(j)] = e;
                z += e;
            }
            for j in 0..g {
                w[at(j)] /= z;
            }
        }
    }
    w
}

pub(crate) fn forward_impl(input: GroupInput<'_>, cfg: &GraConfig, p: &GraParams, flops: &mut Flops) -> Result<(Tensor, GraCache)> {
    cfg.validate()?;
    p.check(cfg)?;
    let (n, g, c) = input.dims()?;
    if c != cfg.c_in {
        return Err(Error::Dimension { op: "GRA channels", lhs: vec![c], rhs: vec![cfg.c_in] });
    }
    let rows = n * g;
    let (cr, cv, k) = (cfg.c_rel(), cfg.c_val(), cfg.k);
    let f_ij = input.f_ij.data();

    let mut cache = GraCache {
        n,
        g,
        alpha: Vec::new(),
        eta: Vec::new(),
        mu: Vec::new(),
        r: Vec::new(),
        pre: Vec::new(),
        hid: Vec::new(),
        weights: Vec::new(),
        v: Vec::new(),
        argmax: None,
        a: Vec::new(),
    };

    let v = p.gamma.apply_rows(f_ij, rows, flops);
    let h = if cfg.uniform_attention {
        v.clone()
    } else {
        let (omega, m1, m2) = (p.omega.as_ref().unwrap(), p.m1.as_ref().unwrap(), p.m2.as_ref().unwrap());
        let alpha = alpha_rows(input.p_i.data(), input.p_ij.data(), n, g, &cfg.geo);
        flops.elementwise(alpha.len());
        let om = omega.apply_rows(&alpha, rows, flops);
        let r = if cfg.sem == SemanticCombinator::None {
            om
        } else {
            let eta = p.eta.as_ref().unwrap().apply_rows(input.f_i.data(), n, flops);
            let mu = p.mu.as_ref().unwrap().apply_rows(f_ij, rows, flops);
            let theta = combine_theta(&eta, &mu, n, g, cr, cfg.sem);
            if cfg.sem != SemanticCombinator::Concatenation {
                flops.elementwise(theta.len());
            }
            let tw = cfg.theta_width();
            let mut r = Vec::with_capacity(rows * (cr + tw));
            for row in 0..rows {
                r.extend_from_slice(&om[row * cr..(row + 1) * cr]);
                r.extend_from_slice(&theta[row * tw..(row + 1) * tw]);
            }
            cache.eta = eta;
            cache.mu = mu;
            r
        };
        let pre = m1.apply_rows(&r, rows, flops);
        let hid: Vec<f64> = pre.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        flops.elementwise(hid.len());
        let logits = m2.apply_rows(&hid, rows, flops);
        let weights = if cfg.normalize {
            flops.elementwise(logits.len());
            softmax_over_group(&logits, n, g, k)
        } else {
            logits
        };
        let h = cross_channel_rows(&weights, &v, rows, k, cv);
        flops.elementwise(h.len());
        cache.alpha = alpha;
        cache.r = r;
        cache.pre = pre;
        cache.hid = hid;
        cache.weights = weights;
        h
    };

    let reduced = reduce(cfg.agg, &Tensor::from_parts(vec![n, g, cv], h), 1)?;
    flops.elementwise(rows * cv);
    let a = reduced.value.into_data();
    let y = p.out.apply_rows(&a, n, flops);
    cache.v = v;
    cache.argmax = reduced.argmax;
    cache.a = a;
    Ok((Tensor::from_parts(vec![n, cfg.c_out], y), cache))
}

/// `y_i = L(A_j(M(R(x_i, x_ij)) ⊗ γ(f_ij)))`, shape `[N'×C_out]`.
pub fn gra_forward(input: GroupInput<'_>, cfg: &GraConfig, params: &GraParams) -> Result<Tensor> {
    Ok(forward_impl(input, cfg, params, &mut Flops::default())?.0)
}

/// Forward that also counts multiply-accumulates into `flops`.
pub fn gra_forward_counted(input: GroupInput<'_>, cfg: &GraConfig, params: &GraParams, flops: &mut Flops) -> Result<Tensor> {
    Ok(forward_impl(input, cfg, params, flops)?.0)
}

pub fn gra_forward_cached(input: GroupInput<'_>, cfg: &GraConfig, params: &GraParams) -> Result<(Tensor, GraCache)> {
    forward_impl(input, cfg, params, &mut Flops::default())
}

/// Exact gradients for every parameter and for `f_i`, `f_ij`. Coordinates
/// are treated as constants.
pub fn gra_backward(
    input: GroupInput<'_>,
    cfg: &GraConfig,
    p: &GraParams,
    cache: Option<&GraCache>,
    d_out: &Tensor,
) -> Result<GraGrads> {
    let cache = cache.ok_or_else(|| Error::State("gra_backward called without a forward cache".into()))?;
    let (n, g, c) = input.dims()?;
    if (n, g) != (cache.n, cache.g) {
        return Err(Error::State("cache does not belong to this input".into()));
    }
    d_out.expect_shape("gra_backward d_out", &[n, cfg.c_out])?;
    let rows = n * g;
    let (cr, cv, k) = (cfg.c_rel(), cfg.c_val(), cfg.k);
    let f_ij = input.f_ij.data();
    let mut grads = p.zeros_like();

    let da = p.out.backward_rows(&cache.a, d_out.data(), n, &mut grads.out);
    let dh = reduce_backward(cfg.agg, &[n, g, cv], 1, cache.argmax.as_deref(), &Tensor::from_parts(vec![n, cv], da))?
        .into_data();

    let mut d_f_i = vec![0.0; n * c];
    let dv = if cfg.uniform_attention {
        dh
    } else {
        let s = cv / k;
        let mut dv = vec![0.0; rows * cv];
        let mut dw = vec![0.0; rows * k];
        for r in 0..rows {
            for ch in 0..cv {
                let idx = r * cv + ch;
                let m = r * k + ch / s;
                dv[idx] = dh[idx] * cache.weights[m];
                dw[m] += dh[idx] * cache.v[idx];
            }
        }
        let dlogit = if cfg.normalize {
            let mut dl = vec![0.0; rows * k];
            for i in 0..n {
                for m in 0..k {
                    let at = |j: usize| (i * g + j) * k + m;
                    let dot: f64 = (0..g).map(|j| cache.weights[at(j)] * dw[at(j)]).sum();
                    for j in 0..g {
                        dl[at(j)] = cache.weights[at(j)] * (dw[at(j)] - dot);
                    }
                }
            }
            dl
        } else {
            dw
        };
        let (m1, m2) = (p.m1.as_ref().unwrap(), p.m2.as_ref().unwrap());
        let mut dhid = m2.backward_rows(&cache.hid, &dlogit, rows, grads.m2.as_mut().unwrap());
        for (d, &x) in dhid.iter_mut().zip(&cache.pre) {
            if x <= 0.0 {
                *d = 0.0;
            }
        }
        let dr = m1.backward_rows(&cache.r, &dhid, rows, grads.m1.as_mut().unwrap());
        let win = cfg.m_in();
        let tw = cfg.theta_width();
        let mut d_omega = Vec::with_capacity(rows * cr);
        let mut d_theta = Vec::with_capacity(rows * tw);
        for r in 0..rows {
            d_omega.extend_from_slice(&dr[r * win..r * win + cr]);
            d_theta.extend_from_slice(&dr[r * win + cr..(r + 1) * win]);
        }
        p.omega.as_ref().unwrap().backward_params_rows(&cache.alpha, &d_omega, rows, grads.omega.as_mut().unwrap());

        if cfg.sem != SemanticCombinator::None {
            let mut d_eta = vec![0.0; n * cr];
            let mut d_mu = vec![0.0; rows * cr];
            for i in 0..n {
                for j in 0..g {
                    let r = i * g + j;
                    let dt = &d_theta[r * tw..(r + 1) * tw];
                    for ch in 0..cr {
                        let (de, dm) = match cfg.sem {
                            SemanticCombinator::Summation => (dt[ch], dt[ch]),
                            SemanticCombinator::Subtraction => (dt[ch], -dt[ch]),
                            SemanticCombinator::Hadamard => {
                                (dt[ch] * cache.mu[r * cr + ch], dt[ch] * cache.eta[i * cr + ch])
                            }
                            SemanticCombinator::Concatenation => (dt[ch], dt[cr + ch]),
                            SemanticCombinator::None => unreachable!(),
                        };
                        d_eta[i * cr + ch] += de;
                        d_mu[r * cr + ch] = dm;
                    }
                }
            }
            d_f_i = p.eta.as_ref().unwrap().backward_rows(input.f_i.data(), &d_eta, n, grads.eta.as_mut().unwrap());
            let dmu_x = p.mu.as_ref().unwrap().backward_rows(f_ij, &d_mu, rows, grads.mu.as_mut().unwrap());
            let dg_x = p.gamma.backward_rows(f_ij, &dv, rows, &mut grads.gamma);
            let d_f_ij: Vec<f64> = dmu_x.iter().zip(&dg_x).map(|(a, b)| a + b).collect();
            return Ok(GraGrads {
                params: grads,
                d_f_i: Tensor::from_parts(vec![n, c], d_f_i),
                d_f_ij: Tensor::from_parts(vec![n, g, c], d_f_ij),
            });
        }
        dv
    };
    let d_f_ij = p.gamma.backward_rows(f_ij, &dv, rows, &mut grads.gamma);
    Ok(GraGrads {
        params: grads,
        d_f_i: Tensor::from_parts(vec![n, c], d_f_i),
        d_f_ij: Tensor::from_parts(vec![n, g, c], d_f_ij),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::gradcheck::random_tensor;

    #[test]
    fn alpha_unit_displacement() {
        let p_i = Tensor::zeros([1, 3]);
        let p_ij = Tensor::new([1, 1, 3], vec![1., 0., 0.]).unwrap();
        let a = geometric_relation_alpha(&p_i, &p_ij, &GeometricRelationSpec::all()).unwrap();
        assert_eq!(a.data(), &[1., 1., 0., 0., 0., 1., 0., 0., -1., 0., 0.]);
    }

    #[test]
    fn alpha_self_relation() {
        let p_i = Tensor::new([1, 3], vec![0.3, -1.0, 2.0]).unwrap();
        let p_ij = Tensor::new([1, 1, 3], vec![0.3, -1.0, 2.0]).unwrap();
        let a = geometric_relation_alpha(&p_i, &p_ij, &GeometricRelationSpec::relative()).unwrap();
        assert_eq!(a.data(), &[0., 0., 0., 0., 0.]);
    }

    #[test]
    fn alpha_needs_a_component() {
        let geo = GeometricRelationSpec { use_l2: false, use_l1: false, use_diff: false, use_abs: false };
        assert!(geometric_relation_alpha(&Tensor::zeros([1, 3]), &Tensor::zeros([1, 1, 3]), &geo).is_err());
    }

    #[test]
    fn theta_identities() {
        let mut rng = stream(3, "theta").rng();
        let f_i = random_tensor(&mut rng, &[2, 8]);
        let mut f_ij = Tensor::zeros([2, 3, 8]);
        for i in 0..2 {
            for j in 0..3 {
                for c in 0..8 {
                    f_ij.set(&[i, j, c], f_i.at(&[i, c]));
                }
            }
        }
        let eta = Linear::init(8, 4, &mut rng);
        let sub = semantic_relation_theta(&f_i, &f_ij, &eta, &eta, SemanticCombinator::Subtraction).unwrap();
        assert!(sub.data().iter().all(|&x| x == 0.0));

        let mut mu = Linear::init(8, 4, &mut rng);
        mu.bias.fill(0.0);
        let had = semantic_relation_theta(&f_i, &Tensor::zeros([2, 3, 8]), &eta, &mu, SemanticCombinator::Hadamard).unwrap();
        assert!(had.data().iter().all(|&x| x == 0.0));

        let neg = Linear { weight: crate::tensor::scale(&mu.weight, -1.0), bias: crate::tensor::scale(&mu.bias, -1.0) };
        let f_ij = random_tensor(&mut rng, &[2, 3, 8]);
        let s = semantic_relation_theta(&f_i, &f_ij, &eta, &mu, SemanticCombinator::Summation).unwrap();
        let d = semantic_relation_theta(&f_i, &f_ij, &eta, &neg, SemanticCombinator::Subtraction).unwrap();
        assert!(s.max_abs_diff(&d) < 1e-15);
        assert!(semantic_relation_theta(&f_i, &f_ij, &eta, &mu, SemanticCombinator::None).is_err());
    }

    #[test]
    fn relation_r_widths() {
        let mut rng = stream(4, "r").rng();
        let alpha = random_tensor(&mut rng, &[2, 3, 10]);
        let omega = Linear::init(10, 4, &mut rng);
        let theta = random_tensor(&mut rng, &[2, 3, 4]);
        assert_eq!(relation_r(&alpha, Some(&theta), &omega).unwrap().shape(), &[2, 3, 8]);
        assert_eq!(relation_r(&alpha, None, &omega).unwrap().shape(), &[2, 3, 4]);
        let z = relation_r(&alpha, Some(&Tensor::zeros([2, 3, 4])), &Linear::zeros(10, 4)).unwrap();
        assert!(z.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weight_mlp_zero_input() {
        let mut rng = stream(5, "m").rng();
        let mut m1 = Linear::init(8, 16, &mut rng);
        let mut m2 = Linear::init(16, 1, &mut rng);
        m1.bias.fill(0.0);
        m2.bias.fill(0.0);
        let out = weight_mlp_m(&Tensor::zeros([3, 5, 8]), &m1, &m2).unwrap();
        assert_eq!(out.shape(), &[3, 5, 1]);
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cross_channel_cases() {
        let mut rng = stream(6, "cc").rng();
        let v = random_tensor(&mut rng, &[2, 3, 8]);
        assert_eq!(cross_channel_apply(&Tensor::ones([2, 3, 4]), &v).unwrap(), v);
        let w = random_tensor(&mut rng, &[2, 3, 8]);
        assert_eq!(cross_channel_apply(&w, &v).unwrap(), crate::tensor::mul(&w, &v).unwrap());
        assert!(matches!(cross_channel_apply(&Tensor::ones([2, 3, 3]), &v), Err(Error::Config(_))));
    }

    #[test]
    fn backward_without_cache_is_state_error() {
        let cfg = GraConfig::new(16, 8, 4);
        let p = GraParams::init(&cfg, &mut stream(0, "p").rng()).unwrap();
        let (f_i, f_ij, p_i, p_ij) = (Tensor::zeros([2, 16]), Tensor::zeros([2, 4, 16]), Tensor::zeros([2, 3]), Tensor::zeros([2, 4, 3]));
        let input = GroupInput { f_i: &f_i, f_ij: &f_ij, p_i: &p_i, p_ij: &p_ij };
        assert!(matches!(gra_backward(input, &cfg, &p, None, &Tensor::zeros([2, 8])), Err(Error::State(_))));
    }

    #[test]
    fn empty_group_is_reported() {
        let cfg = GraConfig::new(16, 8, 0);
        let p = GraParams::init(&cfg, &mut stream(0, "p").rng()).unwrap();
        let (f_i, f_ij, p_i, p_ij) = (Tensor::zeros([2, 16]), Tensor::zeros([2, 0, 16]), Tensor::zeros([2, 3]), Tensor::zeros([2, 0, 3]));
        let input = GroupInput { f_i: &f_i, f_ij: &f_ij, p_i: &p_i, p_ij: &p_ij };
        assert!(matches!(gra_forward(input, &cfg, &p), Err(Error::EmptyGroup(_))));
    }
}
