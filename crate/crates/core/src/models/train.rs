use serde::{Deserialize, Serialize};

use super::net::{canonical_seed, RpNet, RpNetParams};
use crate::data::{augment, Dataset, Task};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::nn::dropout::Mode;
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::{Adam, LrSchedule, Params};
use crate::rng::{Rng, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub lr: LrSchedule,
    #[serde(default = "yes")]
    pub augment: bool,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

/// Supervision for one cloud.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Points(&'a [usize]),
}

/// Train-mode forward and backward for one cloud. Classification loss is the
/// cross-entropy of the cloud; segmentation loss is the mean over points.
pub fn loss_and_grad(model: &RpNet, cloud: &PointCloud, target: Target<'_>, rng: &mut Rng) -> Result<(f64, RpNetParams)> {
    let seed = canonical_seed(cloud.coords());
    let (logits, cache) = model.forward_cached(cloud, seed, Mode::Train, rng)?;
    let (loss, d) = match target {
        Target::Class(c) => softmax_cross_entropy(&logits, &[c])?,
        Target::Points(l) => softmax_cross_entropy(&logits, l)?,
    };
    let grads = model.backward(&cache, &d)?;
    Ok((loss, grads))
}

/// One pass over `data` in seeded random order. Per-sample gradients are
/// computed in parallel and summed in sample order, so results do not depend
/// on the thread count. Returns the mean training loss.
pub fn train_epoch(model: &mut RpNet, opt: &mut Adam, data: &Dataset, epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    use rand::seq::SliceRandom;
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let key = StreamKey::root(cfg.seed).named("train").child(epoch as u64);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut key.named("shuffle").rng());
    let lr = cfg.lr.at_epoch(epoch);
    let mut total = 0.0;
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let m: &RpNet = model;
        let results = crate::par::try_map_range(batch.len(), |j| -> Result<(f64, RpNetParams)> {
            let i = batch[j];
            let mut rng = key.named("sample").child(i as u64).rng();
            let cloud = if cfg.augment { augment(&data.clouds[i], &mut rng)? } else { data.clouds[i].clone() };
            let target = match m.task() {
                Task::Classify => Target::Class(data.labels[i]),
                Task::Segment => Target::Points(cloud.labels().ok_or_else(|| Error::config("segmentation cloud without labels"))?),
            };
            loss_and_grad(m, &cloud, target, &mut rng)
        })?;
        let mut it = results.into_iter();
        let (mut loss, mut grads) = it.next().expect("non-empty batch");
        for (l, g) in it {
            loss += l;
            grads.accumulate(&g);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
        }
        grads.scale_all(1.0 / batch.len() as f64);
        opt.step(&mut model.params, &grads, lr)
            .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
        total += loss;
    }
    Ok(total / data.len().max(1) as f64)
}
