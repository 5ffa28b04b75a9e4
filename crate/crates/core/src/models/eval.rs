use rand::Rng as _;

use super::net::RpNet;
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::nn::loss::softmax_rows;
use crate::rng::{Rng, StreamKey};
use crate::tensor::Tensor;

/// Row-wise argmax, first maximum wins.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Mean over classes of `TP / (TP + FP + FN)`; classes that never occur in
/// `truth` are left out.
pub fn mean_iou(pred: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fneg = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            if p < classes {
                fp[p] += 1;
            }
            fneg[t] += 1;
        }
    }
    let ious: Vec<f64> = (0..classes)
        .filter(|&c| tp[c] + fneg[c] > 0)
        .map(|c| tp[c] as f64 / (tp[c] + fp[c] + fneg[c]) as f64)
        .collect();
    if ious.is_empty() {
        0.0
    } else {
        ious.iter().sum::<f64>() / ious.len() as f64
    }
}

pub const VOTE_SCALE: (f64, f64) = (0.8, 1.25);

fn scaled(cloud: &PointCloud, s: f64) -> PointCloud {
    let mut c = cloud.clone();
    c.coords_mut().scale_assign(s);
    c
}

/// Softmax averaged over `votes` rescaled copies. The first copy is the
/// input itself, the rest use scales drawn uniformly from `[0.8, 1.25]`.
pub fn vote_probs(model: &RpNet, cloud: &PointCloud, votes: usize, rng: &mut Rng) -> Result<Tensor> {
    if votes == 0 {
        return Err(Error::config("votes must be at least 1"));
    }
    let mut acc = softmax_rows(&model.forward(cloud)?);
    for _ in 1..votes {
        let s = rng.random_range(VOTE_SCALE.0..=VOTE_SCALE.1);
        acc.add_assign(&softmax_rows(&model.forward(&scaled(cloud, s))?));
    }
    acc.scale_assign(1.0 / votes as f64);
    Ok(acc)
}

/// Class of a whole cloud after voting.
pub fn vote_predict(model: &RpNet, cloud: &PointCloud, votes: usize, rng: &mut Rng) -> Result<usize> {
    if model.task() != Task::Classify {
        return Err(Error::config("vote_predict is for classification models"));
    }
    Ok(argmax_rows(&vote_probs(model, cloud, votes, rng)?)[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    /// Per-cloud accuracy (classify) or per-point accuracy (segment).
    pub accuracy: f64,
    pub miou: f64,
}

/// Predictions per cloud: one entry (classify) or one per point (segment).
pub fn predict_dataset(model: &RpNet, data: &Dataset, votes: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let key = StreamKey::root(seed).named("vote");
    crate::par::try_map_range(data.len(), |i| {
        let mut rng = key.child(i as u64).rng();
        Ok(argmax_rows(&vote_probs(model, &data.clouds[i], votes, &mut rng)?))
    })
}

pub fn score(task: Task, preds: &[Vec<usize>], data: &Dataset, classes: usize) -> Result<EvalResult> {
    let (pred, truth): (Vec<usize>, Vec<usize>) = match task {
        Task::Classify => (preds.iter().map(|p| p[0]).collect(), data.labels.clone()),
        Task::Segment => {
            let mut truth = Vec::new();
            for c in &data.clouds {
                truth.extend_from_slice(c.labels().ok_or_else(|| Error::config("segmentation cloud without labels"))?);
            }
            (preds.concat(), truth)
        }
    };
    if pred.len() != truth.len() {
        return Err(Error::Dimension { op: "score", lhs: vec![pred.len()], rhs: vec![truth.len()] });
    }
    Ok(EvalResult { accuracy: accuracy(&pred, &truth), miou: mean_iou(&pred, &truth, classes) })
}

pub fn evaluate(model: &RpNet, data: &Dataset, votes: usize, seed: u64) -> Result<EvalResult> {
    let preds = predict_dataset(model, data, votes, seed)?;
    score(model.task(), &preds, data, model.num_classes())
}

/// Class means of flattened raw coordinates; predicts the nearest mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    centroids: Vec<Option<Vec<f64>>>,
}

impl NearestCentroid {
    pub fn fit(data: &Dataset, classes: usize) -> Result<Self> {
        let mut sums: Vec<Option<(Vec<f64>, usize)>> = vec![None; classes];
        for (c, &l) in data.clouds.iter().zip(&data.labels) {
            let x = c.coords().data();
            let slot = sums.get_mut(l).ok_or(Error::Label { label: l, classes })?;
            let (s, n) = slot.get_or_insert_with(|| (vec![0.0; x.len()], 0));
            if s.len() != x.len() {
                return Err(Error::Dimension { op: "nearest centroid", lhs: vec![x.len()], rhs: vec![s.len()] });
            }
            for (a, b) in s.iter_mut().zip(x) {
                *a += b;
            }
            *n += 1;
        }
        let centroids = sums.into_iter().map(|o| o.map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect())).collect();
        Ok(NearestCentroid { centroids })
    }

    pub fn predict(&self, cloud: &PointCloud) -> usize {
        let x = cloud.coords().data();
        let mut best = (0, f64::INFINITY);
        for (k, c) in self.centroids.iter().enumerate() {
            if let Some(c) = c {
                let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (k, d);
                }
            }
        }
        best.0
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let pred: Vec<usize> = data.clouds.iter().map(|c| self.predict(c)).collect();
        accuracy(&pred, &data.labels)
    }
}
