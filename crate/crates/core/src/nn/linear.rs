use rand::Rng as _;

use super::{Flops, Params};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::kernels::{col_sum_into, gemm_into, gemm_nt, gemm_tn_into};
use crate::tensor::Tensor;

/// Affine map `y = x·W + b` applied to every row of the input
/// (all leading axes are treated as rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[in×out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Linear {
    /// Uniform in `±sqrt(1/fan_in)` for both weight and bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..bound)).collect::<Vec<_>>();
        let weight = Tensor::from_parts(vec![fan_in, fan_out], draw(fan_in * fan_out));
        let bias = Tensor::from_parts(vec![fan_out], draw(fan_out));
        Linear { weight, bias }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros([fan_in, fan_out]),
            bias: Tensor::zeros([fan_out]),
        }
    }

    /// Identity map (square layers only).
    pub fn identity(n: usize) -> Self {
        Linear { weight: Tensor::eye(n), bias: Tensor::zeros([n]) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Forward on a raw row buffer of `rows × fan_in`.
    pub fn apply_rows(&self, x: &[f64], rows: usize, flops: &mut Flops) -> Vec<f64> {
        let (i, o) = (self.fan_in(), self.fan_out());
        let mut out = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm_into(x, self.weight.data(), rows, i, o, &mut out);
        flops.linear(rows, i, o);
        out
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_counted(x, &mut Flops::default())
    }

    pub fn forward_counted(&self, x: &Tensor, flops: &mut Flops) -> Result<Tensor> {
        if x.cols() != self.fan_in() {
            return Err(Error::Dimension {
                op: "linear",
                lhs: x.shape().to_vec(),
                rhs: self.weight.shape().to_vec(),
            });
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = self.fan_out();
        Ok(Tensor::from_parts(shape, self.apply_rows(x.data(), x.rows(), flops)))
    }

    /// Accumulate parameter gradients into `grad` and return `∂L/∂x` as a raw buffer.
    pub fn backward_rows(&self, x: &[f64], dy: &[f64], rows: usize, grad: &mut Linear) -> Vec<f64> {
        let (i, o) = (self.fan_in(), self.fan_out());
        gemm_tn_into(x, dy, rows, i, o, grad.weight.data_mut());
        col_sum_into(dy, rows, o, grad.bias.data_mut());
        gemm_nt(dy, self.weight.data(), rows, o, i)
    }

    /// Parameter gradients only.
    pub fn backward_params_rows(&self, x: &[f64], dy: &[f64], rows: usize, grad: &mut Linear) {
        let (i, o) = (self.fan_in(), self.fan_out());
        gemm_tn_into(x, dy, rows, i, o, grad.weight.data_mut());
        col_sum_into(dy, rows, o, grad.bias.data_mut());
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor, grad: &mut Linear) -> Result<Tensor> {
        if x.cols() != self.fan_in() || dy.cols() != self.fan_out() || x.rows() != dy.rows() {
            return Err(Error::Dimension {
                op: "linear_backward",
                lhs: x.shape().to_vec(),
                rhs: dy.shape().to_vec(),
            });
        }
        let dx = self.backward_rows(x.data(), dy.data(), x.rows(), grad);
        Ok(Tensor::from_parts(x.shape().to_vec(), dx))
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.weight"), &self.weight);
        f(&format!("{prefix}.bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}
