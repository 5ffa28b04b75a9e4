use rand::Rng as _;

use crate::error::Result;
use crate::geometry::PointCloud;
use crate::rng::Rng;

pub const SCALE_RANGE: (f64, f64) = (0.8, 1.25);
pub const SHIFT_RANGE: (f64, f64) = (-0.1, 0.1);
pub const MAX_DROPOUT: f64 = 0.875;

/// One realization of the training augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub scale: f64,
    pub shift: [f64; 3],
    pub dropout_ratio: f64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw { scale: 1.0, shift: [0.0; 3], dropout_ratio: 0.0 };

    pub fn sample(rng: &mut Rng) -> Self {
        let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
        let shift = [0; 3].map(|_| rng.random_range(SHIFT_RANGE.0..=SHIFT_RANGE.1));
        let dropout_ratio = rng.random_range(0.0..=MAX_DROPOUT);
        AugmentDraw { scale, shift, dropout_ratio }
    }
}

/// Scale, then shift, then point dropout. Dropped points become copies of
/// the first surviving point (coordinates, features and label), so `N` is
/// preserved. If every point is dropped the cloud keeps its geometry.
pub fn apply_augment(cloud: &PointCloud, draw: AugmentDraw, rng: &mut Rng) -> Result<PointCloud> {
    let mut out = cloud.clone();
    for i in 0..out.len() {
        let row = out.coords_mut().row_mut(i);
        for (x, s) in row.iter_mut().zip(draw.shift) {
            *x = *x * draw.scale + s;
        }
    }
    if draw.dropout_ratio <= 0.0 {
        return Ok(out);
    }
    let dropped: Vec<bool> = (0..out.len()).map(|_| rng.random_bool(draw.dropout_ratio.min(1.0))).collect();
    let Some(keep) = dropped.iter().position(|d| !d) else {
        return Ok(out);
    };
    let order: Vec<usize> = dropped.iter().enumerate().map(|(i, &d)| if d { keep } else { i }).collect();
    out.select(&order)
}

pub fn augment(cloud: &PointCloud, rng: &mut Rng) -> Result<PointCloud> {
    let draw = AugmentDraw::sample(rng);
    apply_augment(cloud, draw, rng)
}
