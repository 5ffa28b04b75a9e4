//! Layer-level [`DiffOp`]s for the gradient checker.

use super::dropout::{dropout_backward, DropoutMask};
use super::loss::softmax_cross_entropy;
use super::propagation::{concat_cols, split_cols, Interpolation};
use super::{Flops, Linear, Params, SharedMlp};
use crate::error::Result;
use crate::rng::{stream, Rng};
use crate::tensor::gradcheck::{random_tensor, DiffOp};
use crate::tensor::Tensor;

/// Inputs `[x, weight, bias]`.
pub struct LinearOp {
    pub rows: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl DiffOp for LinearOp {
    fn name(&self) -> String {
        format!("linear[{}x{}->{}]", self.rows, self.fan_in, self.fan_out)
    }

    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        Linear { weight: x[1].clone(), bias: x[2].clone() }.forward(&x[0])
    }

    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let l = Linear { weight: x[1].clone(), bias: x[2].clone() };
        let mut g = l.zeros_like();
        let dx = l.backward(&x[0], dy, &mut g)?;
        Ok(vec![dx, g.weight, g.bias])
    }

    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        vec![
            random_tensor(rng, &[self.rows, self.fan_in]),
            random_tensor(rng, &[self.fan_in, self.fan_out]),
            random_tensor(rng, &[self.fan_out]),
        ]
    }
}

/// Inputs `[x, <layer weights and biases>]`.
pub struct SharedMlpOp {
    pub template: SharedMlp,
    pub rows: usize,
}

impl SharedMlpOp {
    fn mlp(&self, x: &[Tensor]) -> SharedMlp {
        let mut m = self.template.clone();
        let mut it = x[1..].iter();
        m.visit_mut("", &mut |_, t| *t = it.next().expect("parameter count").clone());
        m
    }
}

impl DiffOp for SharedMlpOp {
    fn name(&self) -> String {
        format!("shared_mlp[{} layers]", self.template.layers.len())
    }

    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        self.mlp(x).forward(&x[0])
    }

    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let m = self.mlp(x);
        let (_, cache) = m.forward_cached(&x[0], &mut Flops::default())?;
        let mut g = m.zeros_like();
        let dx = m.backward(&cache, dy, &mut g)?;
        let mut out = vec![dx];
        g.visit("", &mut |_, t| out.push(t.clone()));
        Ok(out)
    }

    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        let c_in = self.template.layers[0].fan_in();
        let mut v = vec![random_tensor(rng, &[self.rows, c_in])];
        self.template.visit("", &mut |_, t| v.push(random_tensor(rng, t.shape())));
        v
    }

    fn kink_signature(&self, x: &[Tensor]) -> Vec<u64> {
        let m = self.mlp(x);
        m.forward_cached(&x[0], &mut Flops::default())
            .map(|(_, c)| c.pre().iter().flat_map(|t| t.data().iter().map(|&v| (v > 0.0) as u64)).collect())
            .unwrap_or_default()
    }
}

/// Input `[logits]`; output is the scalar loss.
pub struct SoftmaxCrossEntropyOp {
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl DiffOp for SoftmaxCrossEntropyOp {
    fn name(&self) -> String {
        format!("softmax_cross_entropy[B={} K={}]", self.labels.len(), self.classes)
    }

    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        Ok(Tensor::scalar(softmax_cross_entropy(&x[0], &self.labels)?.0))
    }

    fn backward(&self, x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let (_, mut g) = softmax_cross_entropy(&x[0], &self.labels)?;
        g.scale_assign(dy.data()[0]);
        Ok(vec![g])
    }

    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        let mut l = random_tensor(rng, &[self.labels.len(), self.classes]);
        l.scale_assign(3.0);
        vec![l]
    }
}

/// Inputs `[src_feats, skip_feats]`; coordinates fixed.
pub struct PropagationOp {
    interp: Interpolation,
    n_src: usize,
    n_dst: usize,
    c: usize,
    c_skip: usize,
}

impl PropagationOp {
    pub fn new(n_src: usize, n_dst: usize, c: usize, c_skip: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, "propagation-op").rng();
        let src = random_tensor(&mut rng, &[n_src, 3]);
        let dst = random_tensor(&mut rng, &[n_dst, 3]);
        Ok(PropagationOp { interp: Interpolation::new(&src, &dst)?, n_src, n_dst, c, c_skip })
    }
}

impl DiffOp for PropagationOp {
    fn name(&self) -> String {
        format!("feature_propagation[{}->{}]", self.n_src, self.n_dst)
    }

    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        concat_cols(&self.interp.apply(&x[0])?, &x[1])
    }

    fn backward(&self, _x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let (d_up, d_skip) = split_cols(dy, self.c);
        Ok(vec![self.interp.backward(&d_up)?, d_skip])
    }

    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        vec![random_tensor(rng, &[self.n_src, self.c]), random_tensor(rng, &[self.n_dst, self.c_skip])]
    }
}

/// Train-mode dropout with a frozen mask.
pub struct DropoutOp {
    mask: DropoutMask,
    shape: Vec<usize>,
}

impl DropoutOp {
    pub fn new(shape: &[usize], ratio: f64, seed: u64) -> Result<Self> {
        let x = Tensor::ones(shape.to_vec());
        let (_, mask) = super::dropout(&x, ratio, super::Mode::Train, &mut stream(seed, "dropout-op").rng())?;
        let mask = mask.unwrap_or_else(|| DropoutMask(vec![1.0; x.len()]));
        Ok(DropoutOp { mask, shape: shape.to_vec() })
    }
}

impl DiffOp for DropoutOp {
    fn name(&self) -> String {
        format!("dropout[{:?}]", self.shape)
    }

    fn forward(&self, x: &[Tensor]) -> Result<Tensor> {
        let mut y = x[0].clone();
        for (v, m) in y.data_mut().iter_mut().zip(&self.mask.0) {
            *v *= m;
        }
        Ok(y)
    }

    fn backward(&self, _x: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        Ok(vec![dropout_backward(dy, Some(&self.mask))])
    }

    fn sample_inputs(&self, rng: &mut Rng) -> Vec<Tensor> {
        vec![random_tensor(rng, &self.shape)]
    }
}

/// Every layer-level op at small fixed shapes.
pub fn nn_registry() -> Vec<Box<dyn DiffOp>> {
    let mut rng = stream(0, "nn-registry").rng();
    vec![
        Box::new(LinearOp { rows: 4, fan_in: 5, fan_out: 3 }),
        Box::new(SharedMlpOp { template: SharedMlp::init(4, &[6, 5, 3], false, &mut rng), rows: 5 }),
        Box::new(SharedMlpOp { template: SharedMlp::init(3, &[4], true, &mut rng), rows: 6 }),
        Box::new(SoftmaxCrossEntropyOp { labels: vec![0, 2, 1, 2], classes: 3 }),
        Box::new(PropagationOp::new(6, 9, 4, 2, 0).expect("static shape")),
        Box::new(PropagationOp::new(2, 5, 3, 1, 1).expect("static shape")),
        Box::new(DropoutOp::new(&[5, 4], 0.5, 0).expect("valid ratio")),
    ]
}
