use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::{stream, Rng};

/// Evaluation-time perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Permute { seed: u64 },
    Translate { offset: [f64; 3] },
    /// Clockwise about +Y, in degrees.
    RotateY { degrees: f64 },
    Scale { factor: f64 },
    JitterNoise { sigma: f64, fraction: f64, seed: u64 },
    PointDropout { ratio: f64, seed: u64 },
}

/// `(x, y, z) → (x cos θ + z sin θ, y, −x sin θ + z cos θ)`
pub fn rotate_y(cloud: &PointCloud, degrees: f64) -> Result<PointCloud> {
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = cloud.clone();
    for i in 0..out.len() {
        let r = out.coords_mut().row_mut(i);
        let (x, z) = (r[0], r[2]);
        r[0] = x * c + z * s;
        r[2] = -x * s + z * c;
    }
    Ok(out)
}

/// Seeded reordering of points (features and labels follow). Returns the
/// permuted cloud and `order`, where new point `i` is old point `order[i]`.
pub fn permute(cloud: &PointCloud, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut stream(seed, "permute").rng());
    Ok((cloud.select(&order)?, order))
}

/// Jitter a `fraction` of the points (chosen without replacement) by
/// zero-mean Gaussian noise with per-axis standard deviation `sigma`.
pub fn add_noise(cloud: &PointCloud, sigma: f64, fraction: f64, rng: &mut Rng) -> Result<PointCloud> {
    if !(sigma >= 0.0 && (0.0..=1.0).contains(&fraction)) {
        return Err(Error::config(format!("noise needs sigma >= 0 and fraction in [0,1], got {sigma}, {fraction}")));
    }
    let mut out = cloud.clone();
    if sigma == 0.0 || fraction == 0.0 {
        return Ok(out);
    }
    let n = cloud.len();
    let count = ((n as f64) * fraction).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::config(e.to_string()))?;
    for &i in &idx[..count] {
        for x in out.coords_mut().row_mut(i) {
            *x += normal.sample(rng);
        }
    }
    Ok(out)
}

pub fn apply_rigid(cloud: &PointCloud, p: &Perturbation) -> Result<PointCloud> {
    match *p {
        Perturbation::Permute { seed } => Ok(permute(cloud, seed)?.0),
        Perturbation::Translate { offset } => {
            let mut out = cloud.clone();
            for i in 0..out.len() {
                for (x, o) in out.coords_mut().row_mut(i).iter_mut().zip(offset) {
                    *x += o;
                }
            }
            Ok(out)
        }
        Perturbation::RotateY { degrees } => rotate_y(cloud, degrees),
        Perturbation::Scale { factor } => {
            let mut out = cloud.clone();
            out.coords_mut().scale_assign(factor);
            Ok(out)
        }
        Perturbation::JitterNoise { sigma, fraction, seed } => {
            add_noise(cloud, sigma, fraction, &mut stream(seed, "jitter").rng())
        }
        Perturbation::PointDropout { ratio, seed } => {
            if !(0.0..=super::augment::MAX_DROPOUT).contains(&ratio) {
                return Err(Error::config(format!("dropout ratio {ratio} outside [0, 0.875]")));
            }
            let mut rng = stream(seed, "point-dropout").rng();
            let dropped: Vec<bool> = (0..cloud.len()).map(|_| rng.random_bool(ratio)).collect();
            let Some(keep) = dropped.iter().position(|d| !d) else {
                return Ok(cloud.clone());
            };
            let order: Vec<usize> = dropped.iter().enumerate().map(|(i, &d)| if d { keep } else { i }).collect();
            cloud.select(&order)
        }
    }
}

/// Bring a cloud to exactly `n` points: a seeded subset (original order
/// kept) when it is larger, seeded repeats appended when it is smaller.
pub fn resample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    let len = cloud.len();
    if len == 0 || n == 0 {
        return Err(Error::config("cannot resample to or from an empty cloud"));
    }
    if len == n {
        return Ok(cloud.clone());
    }
    let mut rng = stream(seed, "resample").rng();
    let order: Vec<usize> = if len > n {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        let mut keep = idx[..n].to_vec();
        keep.sort_unstable();
        keep
    } else {
        (0..len).chain((len..n).map(|_| rng.random_range(0..len))).collect()
    };
    cloud.select(&order)
}
