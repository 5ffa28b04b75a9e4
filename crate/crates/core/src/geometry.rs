//! Sampling and grouping: farthest point sampling, k-nearest neighbors,
//! ball query and their composition into fixed-size groups.
//!
//! All searches are brute force over squared Euclidean distance. Ties are
//! always broken towards the lowest source index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{gather, Indices, Tensor};

/// Points with optional per-point features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Tensor,
    feats: Option<Tensor>,
    labels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(coords: Tensor, feats: Option<Tensor>, labels: Option<Vec<usize>>) -> Result<Self> {
        match coords.shape() {
            [n, 3] if *n >= 1 => {}
            s => return Err(Error::Dimension { op: "PointCloud", lhs: s.to_vec(), rhs: vec![0, 3] }),
        }
        if !coords.all_finite() {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        let n = coords.rows();
        if let Some(f) = &feats {
            if f.rank() != 2 || f.rows() != n {
                return Err(Error::Dimension { op: "PointCloud feats", lhs: f.shape().to_vec(), rhs: vec![n, 0] });
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Dimension { op: "PointCloud labels", lhs: vec![l.len()], rhs: vec![n] });
            }
        }
        Ok(PointCloud { coords, feats, labels })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self> {
        let data = points.iter().flatten().copied().collect();
        Self::new(Tensor::new([points.len(), 3], data)?, None, None)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut Tensor {
        &mut self.coords
    }

    pub fn feats(&self) -> Option<&Tensor> {
        self.feats.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        let r = self.coords.row(i);
        [r[0], r[1], r[2]]
    }

    pub fn feature_channels(&self) -> usize {
        self.feats.as_ref().map_or(0, Tensor::cols)
    }

    /// Reorder points (with features and labels) so that new point `i` is old point `order[i]`.
    /// `order` may repeat indices.
    pub fn select(&self, order: &[usize]) -> Result<Self> {
        let idx = Indices::new(order.len(), 1, order.to_vec())?;
        let take = |t: &Tensor| -> Result<Tensor> {
            let c = t.cols();
            gather(t, &idx)?.reshape([order.len(), c])
        };
        Ok(PointCloud {
            coords: take(&self.coords)?,
            feats: self.feats.as_ref().map(take).transpose()?,
            labels: self.labels.as_ref().map(|l| order.iter().map(|&i| l[i]).collect()),
        })
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.len() {
                return Err(Error::Dimension { op: "with_labels", lhs: vec![l.len()], rhs: vec![self.len()] });
            }
        }
        self.labels = labels;
        Ok(self)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn require_points(op: &'static str, t: &Tensor) -> Result<usize> {
    match t.shape() {
        [n, 3] => Ok(*n),
        s => Err(Error::Dimension { op, lhs: s.to_vec(), rhs: vec![0, 3] }),
    }
}

/// `out[i, j] = ‖a_i − b_j‖²`.
pub fn pairwise_sq_dist(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let m = require_points("pairwise_sq_dist", a)?;
    let n = require_points("pairwise_sq_dist", b)?;
    let mut out = vec![0.0; m * n];
    par::for_each_row(&mut out, n.max(1), |i, row| {
        let ai = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = sq_dist(ai, b.row(j));
        }
    });
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Greedy max-min subsampling starting from `seed_idx`.
pub fn farthest_point_sample(coords: &Tensor, m: usize, seed_idx: usize) -> Result<Vec<usize>> {
    let n = require_points("farthest_point_sample", coords)?;
    if m == 0 || m > n {
        return Err(Error::Count { requested: m, available: n });
    }
    if seed_idx >= n {
        return Err(Error::Index { index: seed_idx, extent: n });
    }
    let pts = coords.data();
    let mut min_d = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(m);
    let mut last = seed_idx;
    out.push(last);
    min_d[last] = -1.0;
    while out.len() < m {
        let lp = &pts[last * 3..last * 3 + 3];
        let mut best = -1.0;
        let mut best_i = usize::MAX;
        for (j, d) in min_d.iter_mut().enumerate() {
            if *d < 0.0 {
                continue;
            }
            let nd = sq_dist(lp, &pts[j * 3..j * 3 + 3]);
            if nd < *d {
                *d = nd;
            }
            if *d > best {
                best = *d;
                best_i = j;
            }
        }
        last = best_i;
        min_d[last] = -1.0;
        out.push(last);
    }
    Ok(out)
}

fn by_distance_then_index(d: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |&x, &y| d[x].total_cmp(&d[y]).then(x.cmp(&y))
}

/// The `k` nearest sources per query, ascending by distance.
pub fn knn(query: &Tensor, source: &Tensor, k: usize) -> Result<Indices> {
    let m = require_points("knn", query)?;
    let n = require_points("knn", source)?;
    if k == 0 || k > n {
        return Err(Error::Count { requested: k, available: n });
    }
    let mut out = vec![0usize; m * k];
    par::for_each_index_row(&mut out, k, |i, row| {
        let q = query.row(i);
        let d: Vec<f64> = (0..n).map(|j| sq_dist(q, source.row(j))).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let cmp = by_distance_then_index(&d);
        if k < n {
            order.select_nth_unstable_by(k - 1, &cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(&cmp);
        row.copy_from_slice(&order);
    });
    Indices::new(m, k, out)
}

/// Up to `group_size` sources within `radius` of each query, in index order,
/// padded by repeating the first hit. A query with no hit gets its nearest
/// source repeated.
pub fn ball_query(query: &Tensor, source: &Tensor, radius: f64, group_size: usize) -> Result<Indices> {
    let m = require_points("ball_query", query)?;
    let n = require_points("ball_query", source)?;
    if n == 0 {
        return Err(Error::Count { requested: 1, available: 0 });
    }
    if !(radius > 0.0) || group_size == 0 {
        return Err(Error::config(format!("ball query needs radius > 0 and G >= 1 (got {radius}, {group_size})")));
    }
    let r2 = radius * radius;
    let mut out = vec![0usize; m * group_size];
    par::for_each_index_row(&mut out, group_size, |i, row| {
        let q = query.row(i);
        let mut found = 0;
        let mut nearest = (f64::INFINITY, 0usize);
        for j in 0..n {
            let d = sq_dist(q, source.row(j));
            if d < nearest.0 {
                nearest = (d, j);
            }
            if d <= r2 {
                row[found] = j;
                found += 1;
                if found == group_size {
                    break;
                }
            }
        }
        let fill = if found == 0 { nearest.1 } else { row[0] };
        row[found..].iter_mut().for_each(|x| *x = fill);
    });
    Indices::new(m, group_size, out)
}

/// Neighborhood construction strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grouper {
    Knn { k: usize },
    Ball { radius: f64, group_size: usize },
    /// One group holding every point (global aggregation).
    All,
}

impl Grouper {
    /// Group size for a source cloud of `n` points.
    pub fn group_size(&self, n: usize) -> usize {
        match *self {
            Grouper::Knn { k } => k,
            Grouper::Ball { group_size, .. } => group_size,
            Grouper::All => n,
        }
    }

    /// Neighbor rows for `centroids` (indices into `coords`), with each
    /// centroid placed at slot 0 of its own row.
    pub fn group(&self, coords: &Tensor, centroids: &[usize]) -> Result<Indices> {
        let n = require_points("group", coords)?;
        let cidx = Indices::new(centroids.len(), 1, centroids.to_vec())?;
        cidx.check_bounds(n)?;
        let query = gather(coords, &cidx)?.reshape([centroids.len(), 3])?;
        let raw = match *self {
            Grouper::Knn { k } => knn(&query, coords, k)?,
            Grouper::Ball { radius, group_size } => ball_query(&query, coords, radius, group_size)?,
            Grouper::All => knn(&query, coords, n)?,
        };
        let g = raw.cols();
        let mut data = raw.data().to_vec();
        for (row, &c) in data.chunks_mut(g).zip(centroids) {
            put_self_first(row, c);
        }
        Indices::new(centroids.len(), g, data)
    }
}

/// Move `c` to the front of `row`, keeping the order of the rest. If `c` is
/// absent (only possible with many exact duplicates) it replaces the last slot.
fn put_self_first(row: &mut [usize], c: usize) {
    let pos = row.iter().position(|&x| x == c).unwrap_or(row.len() - 1);
    row[pos] = c;
    row[..=pos].rotate_right(1);
}

/// Output of [`GroupIndex`] construction plus the gathered tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndex {
    pub centroid_idx: Vec<usize>,
    pub neighbor_idx: Indices,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grouped {
    pub index: GroupIndex,
    /// `[M×3]`
    pub centroid_coords: Tensor,
    /// `[M×G×3]`
    pub grouped_coords: Tensor,
    /// `[M×G×C]` when the cloud carries features.
    pub grouped_feats: Option<Tensor>,
}

/// FPS down to `m` centroids followed by `grouper`.
pub fn sample_and_group(cloud: &PointCloud, m: usize, grouper: Grouper, seed_idx: usize) -> Result<Grouped> {
    let centroid_idx = match grouper {
        Grouper::All => vec![seed_idx],
        _ => farthest_point_sample(cloud.coords(), m, seed_idx)?,
    };
    if grouper == Grouper::All && seed_idx >= cloud.len() {
        return Err(Error::Index { index: seed_idx, extent: cloud.len() });
    }
    let neighbor_idx = grouper.group(cloud.coords(), &centroid_idx)?;
    let cidx = Indices::new(centroid_idx.len(), 1, centroid_idx.clone())?;
    Ok(Grouped {
        centroid_coords: gather(cloud.coords(), &cidx)?.reshape([centroid_idx.len(), 3])?,
        grouped_coords: gather(cloud.coords(), &neighbor_idx)?,
        grouped_feats: cloud.feats().map(|f| gather(f, &neighbor_idx)).transpose()?,
        index: GroupIndex { centroid_idx, neighbor_idx },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Tensor {
        Tensor::new([xs.len(), 3], xs.iter().flat_map(|&x| [x, 0.0, 0.0]).collect()).unwrap()
    }

    #[test]
    fn pairwise_basics() {
        let a = Tensor::new([1, 3], vec![0., 0., 0.]).unwrap();
        let b = Tensor::new([1, 3], vec![1., 0., 0.]).unwrap();
        assert_eq!(pairwise_sq_dist(&a, &b).unwrap().data(), &[1.0]);
        let p = line(&[0., 1., 5.]);
        let d = pairwise_sq_dist(&p, &p).unwrap();
        for i in 0..3 {
            assert_eq!(d.at(&[i, i]), 0.0);
            for j in 0..3 {
                assert_eq!(d.at(&[i, j]), d.at(&[j, i]));
            }
        }
    }

    #[test]
    fn fps_collinear_example() {
        let p = line(&[0., 1., 2., 3., 10.]);
        assert_eq!(farthest_point_sample(&p, 3, 0).unwrap(), vec![0, 4, 3]);
        assert_eq!(farthest_point_sample(&p, 1, 2).unwrap(), vec![2]);
        let mut all = farthest_point_sample(&p, 5, 0).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(matches!(farthest_point_sample(&p, 6, 0), Err(Error::Count { .. })));
    }

    #[test]
    fn fps_with_duplicates_stays_duplicate_free() {
        let p = line(&[1., 1., 1., 1.]);
        assert_eq!(farthest_point_sample(&p, 4, 2).unwrap(), vec![2, 0, 1, 3]);
    }

    #[test]
    fn knn_examples() {
        let s = line(&[0., 1., 2., 3., 10.]);
        let q = line(&[2.]);
        let r = knn(&q, &s, 5).unwrap();
        assert_eq!(r.row(0), &[2, 1, 3, 0, 4]);
        assert_eq!(knn(&q, &s, 1).unwrap().row(0), &[2]);
        assert!(matches!(knn(&q, &s, 6), Err(Error::Count { .. })));
    }

    #[test]
    fn knn_tie_prefers_lower_index() {
        let s = line(&[-1., 1., 0.5, -0.5]);
        let q = line(&[0.]);
        assert_eq!(knn(&q, &s, 4).unwrap().row(0), &[2, 3, 0, 1]);
    }

    #[test]
    fn ball_query_padding_and_fallback() {
        let s = line(&[0., 1., 2., 3.]);
        let r = ball_query(&s, &s, 0.5, 3).unwrap();
        for i in 0..4 {
            assert_eq!(r.row(i), &[i, i, i]);
        }
        let far = line(&[100.]);
        assert_eq!(ball_query(&far, &s, 0.5, 2).unwrap().row(0), &[3, 3]);
        let q = line(&[1.2]);
        assert_eq!(ball_query(&q, &s, 1.5, 4).unwrap().row(0), &[0, 1, 2, 0]);
        assert!(ball_query(&q, &s, 0.0, 4).is_err());
    }

    #[test]
    fn sample_and_group_self_first() {
        let cloud = PointCloud::from_points(&[[0., 0., 0.], [1., 0., 0.], [0., 2., 0.], [3., 3., 3.]]).unwrap();
        let g = sample_and_group(&cloud, 4, Grouper::Knn { k: 1 }, 0).unwrap();
        for (i, &c) in g.index.centroid_idx.iter().enumerate() {
            assert_eq!(g.index.neighbor_idx.row(i), &[c]);
        }
        let g = sample_and_group(&cloud, 2, Grouper::Knn { k: 3 }, 1).unwrap();
        for i in 0..2 {
            for d in 0..3 {
                assert_eq!(g.grouped_coords.at(&[i, 0, d]), g.centroid_coords.at(&[i, d]));
            }
        }
        let all = sample_and_group(&cloud, 1, Grouper::All, 3).unwrap();
        assert_eq!(all.index.neighbor_idx.row(0)[0], 3);
        assert_eq!(all.index.neighbor_idx.cols(), 4);
    }

    #[test]
    fn self_first_with_coincident_lower_index() {
        let mut row = vec![0, 1, 2];
        put_self_first(&mut row, 1);
        assert_eq!(row, vec![1, 0, 2]);
        let mut row = vec![0, 2];
        put_self_first(&mut row, 1);
        assert_eq!(row, vec![1, 0]);
    }

    #[test]
    fn cloud_validation() {
        assert!(PointCloud::new(Tensor::zeros([0, 3]), None, None).is_err());
        assert!(PointCloud::new(Tensor::zeros([2, 3]), Some(Tensor::zeros([3, 4])), None).is_err());
        assert!(PointCloud::new(Tensor::zeros([2, 3]), None, Some(vec![1])).is_err());
        assert!(PointCloud::new(Tensor::full([1, 3], f64::NAN), None, None).is_err());
    }
}
