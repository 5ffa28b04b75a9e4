use super::spec::{BlockKind, InputFeatures, ModelSpec, Operator, StageShape};
use crate::data::Task;
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, sq_dist, Grouper, PointCloud};
use crate::nn::dropout::{dropout, dropout_backward, DropoutMask, Mode};
use crate::nn::mlp::MlpCache;
use crate::nn::propagation::{concat_cols, split_cols, Interpolation};
use crate::nn::{Flops, Linear, Params, SharedMlp};
use crate::relation::{gra_backward, gra_forward_impl, sa_forward_counted, GraCache, GraConfig, GraParams, GroupInput, SaParams};
use crate::rng::{stream, Rng};
use crate::tensor::{gather, relu, relu_backward, scatter_add, Indices, Tensor};

/// Weights of one aggregator instance.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockParams {
    Gra(GraParams),
    Sa(SaParams),
}

impl BlockParams {
    fn zeros_like(&self) -> Self {
        match self {
            BlockParams::Gra(p) => BlockParams::Gra(p.zeros_like()),
            BlockParams::Sa(p) => BlockParams::Sa(SaParams {
                mlp: p.mlp.iter().map(Linear::zeros_like).collect(),
                post: p.post.as_ref().map(Linear::zeros_like),
            }),
        }
    }
}

impl Params for BlockParams {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        match self {
            BlockParams::Gra(g) => g.visit(p, f),
            BlockParams::Sa(s) => s.visit(p, f),
        }
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        match self {
            BlockParams::Gra(g) => g.visit_mut(p, f),
            BlockParams::Sa(s) => s.visit_mut(p, f),
        }
    }
}

/// Every trainable tensor of a network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct RpNetParams {
    pub stem: SharedMlp,
    /// `[stage][scale]`
    pub blocks: Vec<Vec<BlockParams>>,
    pub decoder: Vec<SharedMlp>,
    pub head: Vec<Linear>,
}

impl RpNetParams {
    pub fn zeros_like(&self) -> Self {
        RpNetParams {
            stem: self.stem.zeros_like(),
            blocks: self.blocks.iter().map(|s| s.iter().map(BlockParams::zeros_like).collect()).collect(),
            decoder: self.decoder.iter().map(SharedMlp::zeros_like).collect(),
            head: self.head.iter().map(Linear::zeros_like).collect(),
        }
    }
}

impl Params for RpNetParams {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stem.visit(&format!("{p}.stem"), f);
        for (s, stage) in self.blocks.iter().enumerate() {
            stage.visit(&format!("{p}.stages.{s}"), f);
        }
        self.decoder.visit(&format!("{p}.decoder"), f);
        self.head.visit(&format!("{p}.head"), f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stem.visit_mut(&format!("{p}.stem"), f);
        for (s, stage) in self.blocks.iter_mut().enumerate() {
            stage.visit_mut(&format!("{p}.stages.{s}"), f);
        }
        self.decoder.visit_mut(&format!("{p}.decoder"), f);
        self.head.visit_mut(&format!("{p}.head"), f);
    }
}

#[derive(Debug, Clone)]
struct ScaleCache {
    idx: Indices,
    f_ij: Tensor,
    p_ij: Tensor,
    gra: Option<GraCache>,
}

#[derive(Debug, Clone)]
struct StageCache {
    centroids: Vec<usize>,
    f_i: Tensor,
    p_i: Tensor,
    scales: Vec<ScaleCache>,
}

#[derive(Debug, Clone)]
struct DecoderCache {
    interp: Interpolation,
    c_src: usize,
    mlp: MlpCache,
}

/// Forward intermediates for [`RpNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stem: MlpCache,
    stages: Vec<StageCache>,
    decoder: Vec<DecoderCache>,
    head_inputs: Vec<Tensor>,
    head_pre: Vec<Tensor>,
    mask: Option<DropoutMask>,
}

impl ForwardCache {
    /// Relu masks and aggregation argmaxes of the whole network; used by the
    /// gradient checker to detect non-smooth perturbations.
    pub fn kink_signature(&self) -> Vec<u64> {
        let relu_bits = |t: &Tensor| t.data().iter().map(|&x| (x > 0.0) as u64).collect::<Vec<_>>();
        let mut sig: Vec<u64> = self.stem.pre().iter().flat_map(relu_bits).collect();
        for st in &self.stages {
            for sc in &st.scales {
                if let Some(g) = &sc.gra {
                    sig.extend(g.kink_signature());
                }
            }
        }
        for d in &self.decoder {
            sig.extend(d.mlp.pre().iter().flat_map(relu_bits));
        }
        sig.extend(self.head_pre.iter().flat_map(relu_bits));
        sig
    }
}

/// `RPNet-W` / `RPNet-D` (or the set-abstraction network of the same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct RpNet {
    spec: ModelSpec,
    shapes: Vec<StageShape>,
    configs: Vec<Vec<GraConfig>>,
    pub params: RpNetParams,
}

/// Index of the point farthest from the cloud's mean (lowest index on ties).
/// It depends only on the geometry, so it follows the points under
/// permutation and rigid motion and makes a canonical FPS seed.
pub fn canonical_seed(coords: &Tensor) -> usize {
    let n = coords.rows() as f64;
    let mut mean = [0.0; 3];
    for i in 0..coords.rows() {
        for (m, &x) in mean.iter_mut().zip(coords.row(i)) {
            *m += x;
        }
    }
    let mean = mean.map(|m| m / n);
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..coords.rows() {
        let d = sq_dist(coords.row(i), &mean);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn gather_rows(x: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let c = x.cols();
    gather(x, &Indices::new(rows.len(), 1, rows.to_vec())?)?.reshape([rows.len(), c])
}

fn add_into(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(s) => s.add_assign(&t),
        None => *slot = Some(t),
    }
}

impl RpNet {
    /// Build with parameters drawn from `stream(seed, "model-init")`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.stage_shapes()?;
        let mut rng = stream(seed, "model-init").rng();
        let stem = SharedMlp::init(spec.input_channels(), &[spec.stem_channels], true, &mut rng);
        let mut configs = Vec::new();
        let mut blocks = Vec::new();
        for (st, sh) in spec.stages.iter().zip(&shapes) {
            let mut cfgs = Vec::new();
            let mut ps = Vec::new();
            for &g in &st.scales {
                let g = if st.group_all { sh.n_in } else { g };
                let cfg = spec.gra.instantiate(sh.c_in, st.out_channels, g);
                ps.push(match spec.operator {
                    Operator::Gra => BlockParams::Gra(GraParams::init(&cfg, &mut rng)?),
                    Operator::Sa => {
                        BlockParams::Sa(SaParams::init(sh.c_in, &[st.out_channels, st.out_channels], None, &mut rng)?)
                    }
                });
                cfgs.push(cfg);
            }
            configs.push(cfgs);
            blocks.push(ps);
        }
        let mut decoder = Vec::new();
        if spec.task == Task::Segment {
            // level l width: stem for l = 0, else the last stage before skip l+1
            let mut level_widths = vec![spec.stem_channels];
            for (s, st) in spec.stages.iter().enumerate() {
                let next_is_skip = spec.stages.get(s + 1).is_none_or(|n| n.block == BlockKind::Skip);
                if next_is_skip {
                    level_widths.push(st.width());
                }
            }
            let top = level_widths.len() - 1;
            let mut c_src = level_widths[top];
            for (i, &w) in spec.decoder.iter().enumerate() {
                let c_skip = level_widths[top - 1 - i];
                decoder.push(SharedMlp::init(c_src + c_skip, &[w], true, &mut rng));
                c_src = w;
            }
        }
        let c_enc = shapes.last().expect("validated").c_out;
        let head = match spec.task {
            Task::Classify => {
                let (h1, h2) = (spec.head.hidden[0], spec.head.hidden[1]);
                vec![Linear::init(c_enc, h1, &mut rng), Linear::init(h1, h2, &mut rng), Linear::init(h2, spec.num_classes, &mut rng)]
            }
            Task::Segment => {
                let c = *spec.decoder.last().expect("validated");
                vec![Linear::init(c, spec.num_classes, &mut rng)]
            }
        };
        Ok(RpNet { spec, shapes, configs, params: RpNetParams { stem, blocks, decoder, head } })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn task(&self) -> Task {
        self.spec.task
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn block_configs(&self) -> &[Vec<GraConfig>] {
        &self.configs
    }

    /// Aggregator instances actually built.
    pub fn block_count(&self) -> usize {
        self.params.blocks.iter().map(Vec::len).sum()
    }

    pub fn count_params(&self) -> usize {
        self.params.count_params()
    }

    /// The set-abstraction network computing exactly what this network
    /// computes when every block uses uniform attention: each block's value
    /// map becomes the one-layer MLP and its output map the post-pool linear.
    pub fn sa_twin(&self) -> Result<RpNet> {
        if self.spec.operator != Operator::Gra || !self.spec.gra.uniform_attention {
            return Err(Error::config("sa_twin needs a GRA network with uniform attention"));
        }
        let mut twin = self.clone();
        twin.spec.operator = Operator::Sa;
        for stage in &mut twin.params.blocks {
            for b in stage.iter_mut() {
                if let BlockParams::Gra(g) = b {
                    *b = BlockParams::Sa(SaParams { mlp: vec![g.gamma.clone()], post: Some(g.out.clone()) });
                }
            }
        }
        Ok(twin)
    }

    fn input_features(&self, cloud: &PointCloud) -> Result<Tensor> {
        if cloud.len() != self.spec.num_points {
            return Err(Error::Dimension { op: "model input", lhs: vec![cloud.len(), 3], rhs: vec![self.spec.num_points, 3] });
        }
        Ok(match self.spec.input {
            InputFeatures::Xyz => cloud.coords().clone(),
            InputFeatures::Constant => Tensor::ones([cloud.len(), 1]),
        })
    }

    /// Eval-mode logits: `[1×K]` for classification, `[N×K]` for
    /// segmentation. The FPS seed is [`canonical_seed`].
    pub fn forward(&self, cloud: &PointCloud) -> Result<Tensor> {
        let seed = canonical_seed(cloud.coords());
        Ok(self.forward_cached(cloud, seed, Mode::Eval, &mut stream(0, "unused").rng())?.0)
    }

    pub fn forward_with_seed(&self, cloud: &PointCloud, seed_idx: usize) -> Result<Tensor> {
        Ok(self.forward_cached(cloud, seed_idx, Mode::Eval, &mut stream(0, "unused").rng())?.0)
    }

    /// Eval forward that also reports multiply-accumulates.
    pub fn forward_counted(&self, cloud: &PointCloud) -> Result<(Tensor, Flops)> {
        let mut flops = Flops::default();
        let seed = canonical_seed(cloud.coords());
        let (y, _) = self.run(cloud, seed, Mode::Eval, &mut stream(0, "unused").rng(), &mut flops)?;
        Ok((y, flops))
    }

    pub fn forward_cached(&self, cloud: &PointCloud, seed_idx: usize, mode: Mode, rng: &mut Rng) -> Result<(Tensor, ForwardCache)> {
        self.run(cloud, seed_idx, mode, rng, &mut Flops::default())
    }

    /// Eval logits for many clouds, evaluated in parallel. Shape `[B×K]` or `[B×N×K]`.
    pub fn forward_batch(&self, clouds: &[PointCloud]) -> Result<Tensor> {
        let outs = crate::par::try_map_range(clouds.len(), |i| self.forward(&clouds[i]))?;
        let k = self.spec.num_classes;
        let shape = match self.spec.task {
            Task::Classify => vec![clouds.len(), k],
            Task::Segment => vec![clouds.len(), self.spec.num_points, k],
        };
        Tensor::new(shape, outs.into_iter().flat_map(Tensor::into_data).collect())
    }

    fn run(&self, cloud: &PointCloud, seed_idx: usize, mode: Mode, rng: &mut Rng, flops: &mut Flops) -> Result<(Tensor, ForwardCache)> {
        let x0 = self.input_features(cloud)?;
        if seed_idx >= cloud.len() {
            return Err(Error::Index { index: seed_idx, extent: cloud.len() });
        }
        let (mut feats, stem) = self.params.stem.forward_cached(&x0, flops)?;
        let mut coords = cloud.coords().clone();
        let mut seed = seed_idx;
        // per level (input resolution, then after each skip stage group): coords and feats
        let mut levels: Vec<(Tensor, Tensor)> = Vec::new();
        let mut stages = Vec::with_capacity(self.spec.stages.len());
        for (s, st) in self.spec.stages.iter().enumerate() {
            if st.block == BlockKind::Skip {
                levels.push((coords.clone(), feats.clone()));
            }
            let n = coords.rows();
            let centroids = if st.group_all {
                vec![seed]
            } else {
                match st.block {
                    BlockKind::Skip => farthest_point_sample(&coords, st.sample_to, seed)?,
                    BlockKind::Residual => (0..n).collect(),
                }
            };
            let p_i = gather_rows(&coords, &centroids)?;
            let f_i = gather_rows(&feats, &centroids)?;
            let mut outs = Vec::with_capacity(st.scales.len());
            let mut scales = Vec::with_capacity(st.scales.len());
            for (k, &g) in st.scales.iter().enumerate() {
                let grouper = if st.group_all { Grouper::All } else { Grouper::Knn { k: g } };
                let idx = grouper.group(&coords, &centroids)?;
                let f_ij = gather(&feats, &idx)?;
                let p_ij = gather(&coords, &idx)?;
                let (y, gra) = match &self.params.blocks[s][k] {
                    BlockParams::Gra(p) => {
                        let input = GroupInput { f_i: &f_i, f_ij: &f_ij, p_i: &p_i, p_ij: &p_ij };
                        let (y, c) = gra_forward_impl(input, &self.configs[s][k], p, flops)?;
                        (y, Some(c))
                    }
                    BlockParams::Sa(p) => (sa_forward_counted(&f_ij, p, flops)?, None),
                };
                outs.push(y);
                scales.push(ScaleCache { idx, f_ij, p_ij, gra });
            }
            let mut out = outs[0].clone();
            for y in &outs[1..] {
                out = concat_cols(&out, y)?;
            }
            if st.block == BlockKind::Residual {
                out.add_assign(&feats);
                flops.elementwise(out.len());
            } else {
                seed = 0;
            }
            coords = p_i.clone();
            feats = out;
            stages.push(StageCache { centroids, f_i, p_i, scales });
        }
        let mut cache = ForwardCache { stem, stages, decoder: Vec::new(), head_inputs: Vec::new(), head_pre: Vec::new(), mask: None };
        let head = &self.params.head;
        let ratio = self.spec.head.dropout;
        let logits = match self.spec.task {
            Task::Classify => {
                let pre0 = head[0].forward_counted(&feats, flops)?;
                let a0 = relu(&pre0);
                let (d0, mask) = dropout(&a0, ratio, mode, rng)?;
                let pre1 = head[1].forward_counted(&d0, flops)?;
                let a1 = relu(&pre1);
                flops.elementwise(pre0.len() + pre1.len());
                let logits = head[2].forward_counted(&a1, flops)?;
                cache.head_inputs = vec![feats, d0, a1];
                cache.head_pre = vec![pre0, pre1];
                cache.mask = mask;
                logits
            }
            Task::Segment => {
                let mut x = feats;
                let mut src_coords = coords;
                for (i, mlp) in self.params.decoder.iter().enumerate() {
                    let (dst_coords, skip) = &levels[levels.len() - 1 - i];
                    let interp = Interpolation::new(&src_coords, dst_coords)?;
                    let up = interp.apply(&x)?;
                    let c_src = up.cols();
                    let (y, mc) = mlp.forward_cached(&concat_cols(&up, skip)?, flops)?;
                    cache.decoder.push(DecoderCache { interp, c_src, mlp: mc });
                    x = y;
                    src_coords = dst_coords.clone();
                }
                let (d, mask) = dropout(&x, ratio, mode, rng)?;
                let logits = head[0].forward_counted(&d, flops)?;
                cache.head_inputs = vec![d];
                cache.mask = mask;
                logits
            }
        };
        Ok((logits, cache))
    }

    /// Parameter gradients given `∂L/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &Tensor) -> Result<RpNetParams> {
        let mut grads = self.params.zeros_like();
        let head = &self.params.head;
        let n_stages = self.spec.stages.len();
        // gradient w.r.t. each stage output; index n_stages.. unused
        let mut d_stage: Vec<Option<Tensor>> = vec![None; n_stages];
        let mut d_stem: Option<Tensor> = None;
        match self.spec.task {
            Task::Classify => {
                let h = &cache.head_inputs;
                let mut d = head[2].backward(&h[2], d_logits, &mut grads.head[2])?;
                d = relu_backward(&cache.head_pre[1], &d)?;
                d = head[1].backward(&h[1], &d, &mut grads.head[1])?;
                d = dropout_backward(&d, cache.mask.as_ref());
                d = relu_backward(&cache.head_pre[0], &d)?;
                d = head[0].backward(&h[0], &d, &mut grads.head[0])?;
                d_stage[n_stages - 1] = Some(d);
            }
            Task::Segment => {
                // stage whose output forms each level; None is the stem
                let mut level_stage: Vec<Option<usize>> = vec![None];
                for s in 0..n_stages {
                    if self.spec.stages.get(s + 1).is_none_or(|n| n.block == BlockKind::Skip) {
                        level_stage.push(Some(s));
                    }
                }
                let top = level_stage.len() - 1;
                let mut add_level = |lvl: usize, t: Tensor, d_stage: &mut Vec<Option<Tensor>>| match level_stage[lvl] {
                    Some(s) => add_into(&mut d_stage[s], t),
                    None => add_into(&mut d_stem, t),
                };
                let mut d = head[0].backward(&cache.head_inputs[0], d_logits, &mut grads.head[0])?;
                d = dropout_backward(&d, cache.mask.as_ref());
                for i in (0..cache.decoder.len()).rev() {
                    let dc = &cache.decoder[i];
                    let dx = self.params.decoder[i].backward(&dc.mlp, &d, &mut grads.decoder[i])?;
                    let (d_up, d_skip) = split_cols(&dx, dc.c_src);
                    add_level(top - 1 - i, d_skip, &mut d_stage);
                    let d_src = dc.interp.backward(&d_up)?;
                    if i == 0 {
                        add_level(top, d_src, &mut d_stage);
                    } else {
                        d = d_src;
                    }
                }
            }
        }
        for s in (0..n_stages).rev() {
            let st = &self.spec.stages[s];
            let sh = self.shapes[s];
            let sc = &cache.stages[s];
            let d_out = d_stage[s].take().unwrap_or_else(|| Tensor::zeros([sh.n_out, sh.c_out]));
            let mut d_in = if st.block == BlockKind::Residual { d_out.clone() } else { Tensor::zeros([sh.n_in, sh.c_in]) };
            let mut col = 0;
            for (k, scale) in sc.scales.iter().enumerate() {
                let cfg = &self.configs[s][k];
                let BlockParams::Gra(p) = &self.params.blocks[s][k] else {
                    return Err(Error::State("set-abstraction networks are inference-only".into()));
                };
                let (_, d_k) = split_cols(&d_out, col);
                let (d_k, _) = split_cols(&d_k, cfg.c_out);
                col += cfg.c_out;
                let input = GroupInput { f_i: &sc.f_i, f_ij: &scale.f_ij, p_i: &sc.p_i, p_ij: &scale.p_ij };
                let g = gra_backward(input, cfg, p, scale.gra.as_ref(), &d_k)?;
                if let BlockParams::Gra(gp) = &mut grads.blocks[s][k] {
                    *gp = g.params;
                }
                for (r, &c) in sc.centroids.iter().enumerate() {
                    for (a, &b) in d_in.row_mut(c).iter_mut().zip(g.d_f_i.row(r)) {
                        *a += b;
                    }
                }
                d_in.add_assign(&scatter_add(&g.d_f_ij, &scale.idx, sh.n_in)?);
            }
            if s == 0 {
                add_into(&mut d_stem, d_in);
            } else {
                add_into(&mut d_stage[s - 1], d_in);
            }
        }
        let d_stem = d_stem.expect("stage 0 always feeds the stem");
        self.params.stem.backward(&cache.stem, &d_stem, &mut grads.stem)?;
        Ok(grads)
    }
}
