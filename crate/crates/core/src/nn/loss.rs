use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean negative log-softmax of the true class over the rows of
/// `logits[B×K]`, with gradient `(softmax − onehot)/B`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = match *logits.shape() {
        [b, k] => (b, k),
        ref s => return Err(Error::Dimension { op: "softmax_cross_entropy", lhs: s.to_vec(), rhs: vec![0, 0] }),
    };
    if labels.len() != b {
        return Err(Error::Dimension { op: "softmax_cross_entropy", lhs: vec![b, k], rhs: vec![labels.len()] });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label { label, classes: k });
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; b * k];
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - mx).exp()).sum();
        let log_z = z.ln() + mx;
        loss += log_z - row[y];
        for (c, g) in grad[r * k..(r + 1) * k].iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            *g = (p - if c == y { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, Tensor::from_parts(vec![b, k], grad)))
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.cols();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(k.max(1)) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}
