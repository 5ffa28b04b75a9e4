//! Inverse-distance feature interpolation from a coarse point set onto a
//! finer one (decoder upsampling).

use crate::error::{Error, Result};
use crate::geometry::knn;
use crate::tensor::Tensor;

const NEIGHBORS: usize = 3;
const EPS: f64 = 1e-8;

/// Fixed interpolation stencil: for each destination point, up to three
/// source indices with normalized weights. Depends on coordinates only.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    n_src: usize,
    k: usize,
    idx: Vec<usize>,
    weights: Vec<f64>,
}

impl Interpolation {
    pub fn new(src_coords: &Tensor, dst_coords: &Tensor) -> Result<Self> {
        let n_src = src_coords.rows();
        if n_src == 0 {
            return Err(Error::Count { requested: 1, available: 0 });
        }
        let k = NEIGHBORS.min(n_src);
        let nn = knn(dst_coords, src_coords, k)?;
        let mut weights = Vec::with_capacity(nn.data().len());
        for d in 0..dst_coords.rows() {
            let q = dst_coords.row(d);
            let row = nn.row(d);
            let dist: Vec<f64> = row.iter().map(|&s| crate::geometry::sq_dist(q, src_coords.row(s))).collect();
            if dist[0] == 0.0 {
                // coincident: copy the nearest source exactly
                weights.push(1.0);
                weights.extend(std::iter::repeat_n(0.0, k - 1));
                continue;
            }
            let w: Vec<f64> = dist.iter().map(|&d2| 1.0 / (d2 + EPS)).collect();
            let z: f64 = w.iter().sum();
            weights.extend(w.iter().map(|x| x / z));
        }
        Ok(Interpolation { n_src, k, idx: nn.data().to_vec(), weights })
    }

    pub fn n_dst(&self) -> usize {
        self.idx.len() / self.k
    }

    /// `out[d] = Σ w[d, t] · src[idx[d, t]]`
    pub fn apply(&self, src_feats: &Tensor) -> Result<Tensor> {
        if src_feats.rank() != 2 || src_feats.rows() != self.n_src {
            return Err(Error::Dimension { op: "interpolate", lhs: src_feats.shape().to_vec(), rhs: vec![self.n_src, 0] });
        }
        let c = src_feats.cols();
        let mut out = vec![0.0; self.n_dst() * c];
        for (d, orow) in out.chunks_mut(c.max(1)).enumerate().take(self.n_dst()) {
            for t in 0..self.k {
                let w = self.weights[d * self.k + t];
                if w == 0.0 {
                    continue;
                }
                for (o, &v) in orow.iter_mut().zip(src_feats.row(self.idx[d * self.k + t])) {
                    *o += w * v;
                }
            }
        }
        Ok(Tensor::from_parts(vec![self.n_dst(), c], out))
    }

    pub fn backward(&self, d_out: &Tensor) -> Result<Tensor> {
        let c = d_out.cols();
        if d_out.rows() != self.n_dst() {
            return Err(Error::Dimension { op: "interpolate_backward", lhs: d_out.shape().to_vec(), rhs: vec![self.n_dst(), c] });
        }
        let mut ds = vec![0.0; self.n_src * c];
        for d in 0..self.n_dst() {
            for t in 0..self.k {
                let w = self.weights[d * self.k + t];
                let s = self.idx[d * self.k + t];
                for (o, &g) in ds[s * c..(s + 1) * c].iter_mut().zip(d_out.row(d)) {
                    *o += w * g;
                }
            }
        }
        Ok(Tensor::from_parts(vec![self.n_src, c], ds))
    }

    /// Source indices used for destination `d`.
    pub fn sources(&self, d: usize) -> &[usize] {
        &self.idx[d * self.k..(d + 1) * self.k]
    }
}

/// Interpolate `src_feats` onto `dst_coords` and append `skip_feats` columns.
pub fn feature_propagation(
    src_coords: &Tensor,
    src_feats: &Tensor,
    dst_coords: &Tensor,
    skip_feats: Option<&Tensor>,
) -> Result<Tensor> {
    let interp = Interpolation::new(src_coords, dst_coords)?.apply(src_feats)?;
    match skip_feats {
        None => Ok(interp),
        Some(skip) => concat_cols(&interp, skip),
    }
}

/// `[a | b]` along the trailing axis of two row-aligned matrices.
pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension { op: "concat_cols", lhs: a.shape().to_vec(), rhs: b.shape().to_vec() });
    }
    let (ca, cb) = (a.cols(), b.cols());
    let mut out = Vec::with_capacity(a.rows() * (ca + cb));
    for r in 0..a.rows() {
        out.extend_from_slice(a.row(r));
        out.extend_from_slice(b.row(r));
    }
    Ok(Tensor::from_parts(vec![a.rows(), ca + cb], out))
}

/// Inverse of [`concat_cols`] for gradients: split at column `ca`.
pub fn split_cols(x: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let (r, c) = (x.rows(), x.cols());
    let mut a = Vec::with_capacity(r * ca);
    let mut b = Vec::with_capacity(r * (c - ca));
    for i in 0..r {
        a.extend_from_slice(&x.row(i)[..ca]);
        b.extend_from_slice(&x.row(i)[ca..]);
    }
    (Tensor::from_parts(vec![r, ca], a), Tensor::from_parts(vec![r, c - ca], b))
}
