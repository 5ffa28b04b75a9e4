use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::perturb::rotate_y;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::{Rng, StreamKey};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Torus,
    Plane,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Torus => "torus",
            ShapeKind::Plane => "plane",
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sphere" => ShapeKind::Sphere,
            "cube" => ShapeKind::Cube,
            "cylinder" => ShapeKind::Cylinder,
            "torus" => ShapeKind::Torus,
            "plane" => ShapeKind::Plane,
            _ => return Err(Error::config(format!("unknown shape kind {s:?}"))),
        })
    }
}

/// Classification: `clouds_per_class` clouds of each shape, label = index in
/// `classes`. Segmentation: `classes[0]` is the ground, every other class is
/// an object; each scene puts one object on the ground, `clouds_per_class`
/// scenes per object, and point labels are class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDatasetSpec {
    pub task: Task,
    pub classes: Vec<ShapeKind>,
    pub points_per_cloud: usize,
    pub clouds_per_class: usize,
    pub seed: u64,
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_cloud < 64 {
            return Err(Error::config(format!("points_per_cloud {} < 64", self.points_per_cloud)));
        }
        if self.clouds_per_class == 0 {
            return Err(Error::config("clouds_per_class must be positive"));
        }
        let min = if self.task == Task::Segment { 2 } else { 1 };
        if self.classes.len() < min {
            return Err(Error::config(format!("{:?} dataset needs at least {min} classes", self.task)));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    /// Per-cloud labels; empty for segmentation (labels live on the points).
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

fn unit_sphere(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn sample_point(kind: ShapeKind, rng: &mut Rng) -> [f64; 3] {
    match kind {
        ShapeKind::Sphere => unit_sphere(rng),
        ShapeKind::Cube => {
            let h = 0.7;
            let face = rng.random_range(0..6);
            let (u, v) = (rng.random_range(-h..h), rng.random_range(-h..h));
            let s = if face % 2 == 0 { h } else { -h };
            match face / 2 {
                0 => [s, u, v],
                1 => [u, s, v],
                _ => [u, v, s],
            }
        }
        ShapeKind::Cylinder => {
            let (r, h) = (0.6, 0.8);
            let side = 2.0 * PI * r * 2.0 * h;
            let caps = 2.0 * PI * r * r;
            if rng.random_range(0.0..side + caps) < side {
                let t = rng.random_range(0.0..2.0 * PI);
                [r * t.cos(), rng.random_range(-h..h), r * t.sin()]
            } else {
                let t = rng.random_range(0.0..2.0 * PI);
                let rho = r * rng.random_range(0.0f64..1.0).sqrt();
                let y = if rng.random_bool(0.5) { h } else { -h };
                [rho * t.cos(), y, rho * t.sin()]
            }
        }
        ShapeKind::Torus => {
            let (big, small) = (0.7, 0.25);
            // rejection on the area element (R + r cos v)
            loop {
                let u = rng.random_range(0.0..2.0 * PI);
                let v = rng.random_range(0.0..2.0 * PI);
                if rng.random_range(0.0..big + small) <= big + small * v.cos() {
                    let w = big + small * v.cos();
                    return [w * u.cos(), small * v.sin(), w * u.sin()];
                }
            }
        }
        ShapeKind::Plane => [rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0)],
    }
}

/// `n` points sampled uniformly on the surface of a unit-scale shape.
pub fn sample_shape(kind: ShapeKind, n: usize, rng: &mut Rng) -> Vec<[f64; 3]> {
    (0..n).map(|_| sample_point(kind, rng)).collect()
}

fn cloud_from(points: Vec<[f64; 3]>, labels: Option<Vec<usize>>) -> Result<PointCloud> {
    let n = points.len();
    let coords = Tensor::new([n, 3], points.into_iter().flatten().collect())?;
    PointCloud::new(coords, None, labels)
}

fn classify_cloud(kind: ShapeKind, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    let pts = sample_shape(kind, n, rng);
    let turn = rng.random_range(0.0..360.0);
    rotate_y(&cloud_from(pts, None)?, turn)
}

fn segment_scene(object: ShapeKind, object_label: usize, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    let n_obj = (n * 2) / 5;
    let scale = rng.random_range(0.3..0.5);
    let (cx, cz) = (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
    let mut pts = sample_shape(ShapeKind::Plane, n - n_obj, rng);
    let obj = sample_shape(object, n_obj, rng);
    // rest the object on the ground
    let min_y = obj.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    pts.extend(obj.iter().map(|p| [cx + scale * p[0], scale * (p[1] - min_y), cz + scale * p[2]]));
    let mut labels = vec![0; n - n_obj];
    labels.extend(std::iter::repeat_n(object_label, n_obj));
    // interleave so point order carries no label information
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let pts: Vec<[f64; 3]> = order.iter().map(|&i| pts[i]).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    let turn = rng.random_range(0.0..360.0);
    rotate_y(&cloud_from(pts, Some(labels))?, turn)
}

/// Deterministic `(train, test)` split, 80/20 after a seeded shuffle.
pub fn generate_toy(spec: &ToyDatasetSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let root = StreamKey::root(spec.seed).named("toy");
    let mut items: Vec<(PointCloud, usize)> = Vec::new();
    match spec.task {
        Task::Classify => {
            for (label, &kind) in spec.classes.iter().enumerate() {
                for i in 0..spec.clouds_per_class {
                    let mut rng = root.named(kind.name()).child(i as u64).rng();
                    items.push((classify_cloud(kind, spec.points_per_cloud, &mut rng)?, label));
                }
            }
        }
        Task::Segment => {
            if spec.classes[1..].contains(&spec.classes[0]) {
                return Err(Error::config("segment ground class must differ from object classes"));
            }
            if spec.classes[0] != ShapeKind::Plane {
                return Err(Error::config("segment scenes need plane as the ground class"));
            }
            for (label, &kind) in spec.classes.iter().enumerate().skip(1) {
                for i in 0..spec.clouds_per_class {
                    let mut rng = root.named("scene").named(kind.name()).child(i as u64).rng();
                    items.push((segment_scene(kind, label, spec.points_per_cloud, &mut rng)?, label));
                }
            }
        }
    }
    items.shuffle(&mut root.named("split").rng());
    let n_train = items.len() - items.len().div_ceil(5);
    let test = items.split_off(n_train);
    let pack = |v: Vec<(PointCloud, usize)>| {
        let (clouds, labels): (Vec<_>, Vec<_>) = v.into_iter().unzip();
        let labels = if spec.task == Task::Classify { labels } else { Vec::new() };
        Dataset { clouds, labels }
    };
    Ok((pack(items), pack(test)))
}
