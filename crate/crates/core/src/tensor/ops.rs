//! Forward/backward pairs for the primitive operations.

use super::kernels::{gemm, gemm_nt, gemm_tn_into};
use super::{Indices, Tensor};
use crate::error::{Error, Result};

fn require_rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Dimension {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![0, 0],
        }),
    }
}

/// Matrix product `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = require_rank2("matmul", a)?;
    let (k2, n) = require_rank2("matmul", b)?;
    if k != k2 {
        return Err(Error::Dimension {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(Tensor::from_parts(vec![m, n], gemm(a.data(), b.data(), m, k, n)))
}

/// Returns `(dA, dB) = (dY·Bᵀ, Aᵀ·dY)`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, k) = require_rank2("matmul_backward", a)?;
    let (_, n) = require_rank2("matmul_backward", b)?;
    dy.expect_shape("matmul_backward", &[m, n])?;
    let da = gemm_nt(dy.data(), b.data(), m, n, k);
    let mut db = vec![0.0; k * n];
    gemm_tn_into(a.data(), dy.data(), m, k, n, &mut db);
    Ok((
        Tensor::from_parts(vec![m, k], da),
        Tensor::from_parts(vec![k, n], db),
    ))
}

/// Pointwise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Scale(f64),
}

impl Elementwise {
    pub fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            Elementwise::Relu | Elementwise::Scale(_) => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Elementwise::Add => "add",
            Elementwise::Sub => "sub",
            Elementwise::Mul => "mul",
            Elementwise::Relu => "relu",
            Elementwise::Scale(_) => "scale",
        }
    }
}

fn zip_with(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    ))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("mul", a, b, |x, y| x * y)
}

/// `max(x, 0)`. The subgradient at exactly 0 is taken as 0.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn scale(x: &Tensor, s: f64) -> Tensor {
    x.map(|v| v * s)
}

pub fn add_backward(dy: &Tensor) -> (Tensor, Tensor) {
    (dy.clone(), dy.clone())
}

pub fn sub_backward(dy: &Tensor) -> (Tensor, Tensor) {
    (dy.clone(), scale(dy, -1.0))
}

pub fn mul_backward(a: &Tensor, b: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor)> {
    Ok((mul(dy, b)?, mul(dy, a)?))
}

pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    zip_with("relu_backward", x, dy, |v, g| if v > 0.0 { g } else { 0.0 })
}

pub fn scale_backward(dy: &Tensor, s: f64) -> Tensor {
    scale(dy, s)
}

/// Dispatch on [`Elementwise`]; `operands` holds one or two tensors.
pub fn elementwise(kind: Elementwise, operands: &[&Tensor]) -> Result<Tensor> {
    if operands.len() != kind.arity() {
        return Err(Error::config(format!(
            "{} expects {} operands, got {}",
            kind.name(),
            kind.arity(),
            operands.len()
        )));
    }
    match kind {
        Elementwise::Add => add(operands[0], operands[1]),
        Elementwise::Sub => sub(operands[0], operands[1]),
        Elementwise::Mul => mul(operands[0], operands[1]),
        Elementwise::Relu => Ok(relu(operands[0])),
        Elementwise::Scale(s) => Ok(scale(operands[0], s)),
    }
}

/// Gradients with respect to each operand.
pub fn elementwise_backward(kind: Elementwise, operands: &[&Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
    if operands.len() != kind.arity() {
        return Err(Error::config(format!("{} arity", kind.name())));
    }
    Ok(match kind {
        Elementwise::Add => {
            let (a, b) = add_backward(dy);
            vec![a, b]
        }
        Elementwise::Sub => {
            let (a, b) = sub_backward(dy);
            vec![a, b]
        }
        Elementwise::Mul => {
            let (a, b) = mul_backward(operands[0], operands[1], dy)?;
            vec![a, b]
        }
        Elementwise::Relu => vec![relu_backward(operands[0], dy)?],
        Elementwise::Scale(s) => vec![scale_backward(dy, s)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceKind {
    Max,
    Mean,
    Sum,
}

impl ReduceKind {
    pub const ALL: [ReduceKind; 3] = [ReduceKind::Max, ReduceKind::Mean, ReduceKind::Sum];

    pub fn name(self) -> &'static str {
        match self {
            ReduceKind::Max => "max",
            ReduceKind::Mean => "mean",
            ReduceKind::Sum => "sum",
        }
    }
}

/// Result of [`reduce`]; `argmax` holds, per output element, the winning
/// position along the reduced axis (first occurrence on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced {
    pub value: Tensor,
    pub argmax: Option<Vec<usize>>,
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s: Vec<usize> = shape.to_vec();
    s.remove(axis);
    if s.is_empty() {
        s.push(1);
    }
    s
}

pub fn reduce(kind: ReduceKind, x: &Tensor, axis: usize) -> Result<Reduced> {
    if axis >= x.rank() {
        return Err(Error::Dimension {
            op: "reduce",
            lhs: x.shape().to_vec(),
            rhs: vec![axis],
        });
    }
    let (outer, len, inner) = split_axis(x.shape(), axis);
    if len == 0 {
        return Err(Error::EmptyGroup("reduce"));
    }
    let d = x.data();
    let mut out = vec![0.0; outer * inner];
    let mut arg = (kind == ReduceKind::Max).then(|| vec![0usize; outer * inner]);
    for o in 0..outer {
        for i in 0..inner {
            let at = |g: usize| d[(o * len + g) * inner + i];
            let slot = o * inner + i;
            match kind {
                ReduceKind::Max => {
                    let (mut best, mut bi) = (at(0), 0);
                    for g in 1..len {
                        if at(g) > best {
                            best = at(g);
                            bi = g;
                        }
                    }
                    out[slot] = best;
                    arg.as_mut().unwrap()[slot] = bi;
                }
                ReduceKind::Sum | ReduceKind::Mean => {
                    let s: f64 = (0..len).map(at).sum();
                    out[slot] = if kind == ReduceKind::Mean { s / len as f64 } else { s };
                }
            }
        }
    }
    Ok(Reduced {
        value: Tensor::from_parts(reduced_shape(x.shape(), axis), out),
        argmax: arg,
    })
}

/// Gradient of [`reduce`] with respect to its input of shape `x_shape`.
pub fn reduce_backward(
    kind: ReduceKind,
    x_shape: &[usize],
    axis: usize,
    argmax: Option<&[usize]>,
    dy: &Tensor,
) -> Result<Tensor> {
    let (outer, len, inner) = split_axis(x_shape, axis);
    if dy.len() != outer * inner {
        return Err(Error::Dimension {
            op: "reduce_backward",
            lhs: x_shape.to_vec(),
            rhs: dy.shape().to_vec(),
        });
    }
    let mut dx = vec![0.0; outer * len * inner];
    let g = dy.data();
    match kind {
        ReduceKind::Max => {
            let arg = argmax.ok_or_else(|| Error::State("max backward needs argmax".into()))?;
            for o in 0..outer {
                for i in 0..inner {
                    let slot = o * inner + i;
                    dx[(o * len + arg[slot]) * inner + i] = g[slot];
                }
            }
        }
        ReduceKind::Sum | ReduceKind::Mean => {
            let w = if kind == ReduceKind::Mean { 1.0 / len as f64 } else { 1.0 };
            for o in 0..outer {
                for k in 0..len {
                    for i in 0..inner {
                        dx[(o * len + k) * inner + i] = g[o * inner + i] * w;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(x_shape.to_vec(), dx))
}

/// `out[i, j, :] = x[idx[i, j], :]` for `x[N×C]`, `idx[N'×G]`.
pub fn gather(x: &Tensor, idx: &Indices) -> Result<Tensor> {
    let (n, c) = require_rank2("gather", x)?;
    idx.check_bounds(n)?;
    let mut out = Vec::with_capacity(idx.data().len() * c);
    for &j in idx.data() {
        out.extend_from_slice(&x.data()[j * c..(j + 1) * c]);
    }
    Ok(Tensor::from_parts(vec![idx.rows(), idx.cols(), c], out))
}

/// Adjoint of [`gather`]: adds `g[i, j, :]` into row `idx[i, j]` of an `n×C` result.
pub fn scatter_add(g: &Tensor, idx: &Indices, n: usize) -> Result<Tensor> {
    idx.check_bounds(n)?;
    let c = g.cols();
    if g.len() != idx.data().len() * c {
        return Err(Error::Dimension {
            op: "scatter_add",
            lhs: g.shape().to_vec(),
            rhs: idx.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; n * c];
    for (r, &j) in idx.data().iter().enumerate() {
        for (o, &v) in out[j * c..(j + 1) * c].iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
            *o += v;
        }
    }
    Ok(Tensor::from_parts(vec![n, c], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let x = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(matmul(&Tensor::eye(2), &x).unwrap(), x);
        let y = matmul(&x, &t(&[2, 1], &[5., 6.])).unwrap();
        assert_eq!(y.data(), &[17., 39.]);
        let z = matmul(&Tensor::zeros([2, 3]), &Tensor::ones([3, 4])).unwrap();
        assert_eq!(z, Tensor::zeros([2, 4]));
    }

    #[test]
    fn matmul_shape_error_names_both() {
        match matmul(&Tensor::zeros([2, 3]), &Tensor::zeros([2, 3])) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(relu(&t(&[3], &[-1., 0., 2.])).data(), &[0., 0., 2.]);
        let x = t(&[2], &[1.5, -2.]);
        assert_eq!(add(&x, &Tensor::zeros([2])).unwrap(), x);
        assert_eq!(mul(&t(&[2], &[2., 3.]), &t(&[2], &[4., 5.])).unwrap().data(), &[8., 15.]);
        assert!(add(&x, &Tensor::zeros([3])).is_err());
        let g = relu_backward(&t(&[3], &[-1., 0., 2.]), &Tensor::ones([3])).unwrap();
        assert_eq!(g.data(), &[0., 0., 1.]);
    }

    #[test]
    fn reduce_examples() {
        let r = reduce(ReduceKind::Max, &t(&[3], &[1., 5., 3.]), 0).unwrap();
        assert_eq!(r.value.data(), &[5.]);
        assert_eq!(r.argmax.unwrap(), vec![1]);
        let m = reduce(ReduceKind::Mean, &t(&[2], &[2., 4.]), 0).unwrap();
        assert_eq!(m.value.data(), &[3.]);
    }

    #[test]
    fn max_tie_routes_to_first() {
        let x = t(&[1, 3], &[2., 2., 1.]);
        let r = reduce(ReduceKind::Max, &x, 1).unwrap();
        let dx = reduce_backward(ReduceKind::Max, x.shape(), 1, r.argmax.as_deref(), &Tensor::ones([1])).unwrap();
        assert_eq!(dx.data(), &[1., 0., 0.]);
    }

    #[test]
    fn reduce_middle_axis() {
        // shape [2,3,2], reduce axis 1
        let x = Tensor::new([2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        let r = reduce(ReduceKind::Sum, &x, 1).unwrap();
        assert_eq!(r.value.shape(), &[2, 2]);
        assert_eq!(r.value.data(), &[6., 9., 24., 27.]);
    }

    #[test]
    fn empty_axis_is_an_error() {
        let x = Tensor::new([2, 0], vec![]).unwrap();
        assert!(matches!(reduce(ReduceKind::Sum, &x, 1), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn gather_examples() {
        let x = t(&[2, 2], &[1., 2., 3., 4.]);
        let id = Indices::from_rows(&[vec![0], vec![1]]).unwrap();
        assert_eq!(gather(&x, &id).unwrap().data(), x.data());
        let dup = Indices::from_rows(&[vec![0, 0]]).unwrap();
        let g = scatter_add(&Tensor::ones([1, 2, 2]), &dup, 2).unwrap();
        assert_eq!(g.data(), &[2., 2., 0., 0.]);
        let bad = Indices::from_rows(&[vec![2]]).unwrap();
        assert!(matches!(gather(&x, &bad), Err(Error::Index { index: 2, extent: 2 })));
    }

    #[test]
    fn gather_inverse_permutation_roundtrip() {
        let x = Tensor::new([4, 2], (0..8).map(f64::from).collect()).unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut inv = [0usize; 4];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let y = gather(&x, &Indices::new(4, 1, perm.to_vec()).unwrap()).unwrap().reshape([4, 2]).unwrap();
        let z = gather(&y, &Indices::new(4, 1, inv.to_vec()).unwrap()).unwrap().reshape([4, 2]).unwrap();
        assert_eq!(z, x);
    }
}
