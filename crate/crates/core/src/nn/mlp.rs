use super::{Flops, Linear, Params};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// The same stack of linear layers applied independently to every row.
/// ReLU follows every layer except the last, which gets one only when
/// `final_relu` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedMlp {
    pub layers: Vec<Linear>,
    pub final_relu: bool,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
}

impl MlpCache {
    /// Pre-activations of every layer.
    pub fn pre(&self) -> &[Tensor] {
        &self.pre
    }
}

impl SharedMlp {
    pub fn init(c_in: usize, widths: &[usize], final_relu: bool, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = c_in;
        for &w in widths {
            layers.push(Linear::init(prev, w, rng));
            prev = w;
        }
        SharedMlp { layers, final_relu }
    }

    pub fn zeros_like(&self) -> Self {
        SharedMlp { layers: self.layers.iter().map(Linear::zeros_like).collect(), final_relu: self.final_relu }
    }

    pub fn c_out(&self) -> Option<usize> {
        self.layers.last().map(Linear::fan_out)
    }

    fn relu_after(&self, i: usize) -> bool {
        i + 1 < self.layers.len() || self.final_relu
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x, &mut Flops::default())?.0)
    }

    pub fn forward_cached(&self, x: &Tensor, flops: &mut Flops) -> Result<(Tensor, MlpCache)> {
        let mut cache = MlpCache { inputs: Vec::new(), pre: Vec::new() };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward_counted(&h, flops)?;
            cache.inputs.push(h);
            h = if self.relu_after(i) {
                flops.elementwise(pre.len());
                crate::tensor::relu(&pre)
            } else {
                pre.clone()
            };
            cache.pre.push(pre);
        }
        Ok((h, cache))
    }

    pub fn backward(&self, cache: &MlpCache, dy: &Tensor, grads: &mut SharedMlp) -> Result<Tensor> {
        let mut d = dy.clone();
        for i in (0..self.layers.len()).rev() {
            if self.relu_after(i) {
                d = crate::tensor::relu_backward(&cache.pre[i], &d)?;
            }
            d = self.layers[i].backward(&cache.inputs[i], &d, &mut grads.layers[i])?;
        }
        Ok(d)
    }
}

impl Params for SharedMlp {
    fn visit(&self, p: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.layers.visit(p, f);
    }
    fn visit_mut(&mut self, p: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.layers.visit_mut(p, f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::gradcheck::random_tensor;

    #[test]
    fn identity_layer_passes_through() {
        let mlp = SharedMlp { layers: vec![Linear::identity(4)], final_relu: false };
        let x = random_tensor(&mut stream(0, "x").rng(), &[5, 4]);
        assert_eq!(mlp.forward(&x).unwrap(), x);
    }

    #[test]
    fn pointwise_independence_under_permutation() {
        let mut rng = stream(1, "mlp").rng();
        let mlp = SharedMlp::init(3, &[8, 5], true, &mut rng);
        let x = random_tensor(&mut rng, &[6, 3]);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let xp = Tensor::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let y = mlp.forward(&x).unwrap();
        let yp = mlp.forward(&xp).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(yp.row(k), y.row(i));
        }
    }
}
