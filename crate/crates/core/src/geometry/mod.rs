//! Point-cloud types, normalization and neighborhood queries.

mod io;
mod shapes;

pub use io::{
    load_dataset, load_rfpc, load_xyz, save_dataset, save_rfpc, save_xyz, CLASSES_FILE,
    MANIFEST_FILE,
};
pub use shapes::{generate_dataset, synth_shape, ShapeKind};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An ordered set of 3D points. Never empty; all coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(Self { points })
    }

    /// Build from double-precision coordinates, rounding to `f32`.
    pub fn from_f64(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        let p = self.points[i];
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    pub fn into_points(self) -> Vec<[f32; 3]> {
        self.points
    }

    /// Points at `indices`, in the order given.
    ///
    /// Panics if `indices` is empty or out of range.
    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        assert!(!indices.is_empty(), "subset must keep at least one point");
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// Centered on the origin and scaled so the farthest point has norm 1.
    pub fn normalized(&self) -> PointCloud {
        let n = self.points.len() as f64;
        let mut c = [0.0f64; 3];
        for p in &self.points {
            for d in 0..3 {
                c[d] += p[d] as f64;
            }
        }
        for v in &mut c {
            *v /= n;
        }
        let centered: Vec<[f64; 3]> = self
            .points
            .iter()
            .map(|p| [p[0] as f64 - c[0], p[1] as f64 - c[1], p[2] as f64 - c[2]])
            .collect();
        let max_norm = centered.iter().map(|p| norm(*p)).fold(0.0, f64::max);
        let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 0.0 };
        PointCloud {
            points: centered
                .iter()
                .map(|p| {
                    [
                        (p[0] * scale) as f32,
                        (p[1] * scale) as f32,
                        (p[2] * scale) as f32,
                    ]
                })
                .collect(),
        }
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0f64; 3];
        for i in 0..self.len() {
            let p = self.point(i);
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        c.map(|v| v / self.len() as f64)
    }
}

/// Normalize raw coordinates into the unit sphere.
///
/// A cloud whose points all coincide maps to all zeros.
pub fn normalize_unit_sphere(points: &[[f32; 3]]) -> Result<PointCloud> {
    Ok(PointCloud::new(points.to_vec())?.normalized())
}

pub(crate) fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub(crate) fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Indices of the `k` nearest neighbours of `query`, excluding the query itself.
///
/// Sorted by distance; equal distances resolve to the lower index.
pub fn knn(cloud: &PointCloud, query: usize, k: usize) -> Result<Vec<usize>> {
    let n = cloud.len();
    if query >= n {
        return Err(Error::InvalidArgument(format!(
            "query index {query} out of range for {n} points"
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must be in [1, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    let q = cloud.point(query);
    let mut cand: Vec<(f64, usize)> = (0..n)
        .filter(|&i| i != query)
        .map(|i| (dist2(q, cloud.point(i)), i))
        .collect();
    Ok(smallest_k(&mut cand, k))
}

/// Mean Euclidean distance from every point to its `k` nearest neighbours.
pub fn mean_knn_distances(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must be in [1, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    let pts: Vec<[f64; 3]> = (0..n).map(|i| cloud.point(i)).collect();
    let mut cand = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| {
            cand.clear();
            cand.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (dist2(pts[i], pts[j]), j)),
            );
            let (head, _, _) = cand.select_nth_unstable_by(k - 1, cmp_dist);
            let mut s: f64 = head.iter().map(|c| c.0.sqrt()).sum();
            s += cand[k - 1].0.sqrt();
            s / k as f64
        })
        .collect())
}

fn cmp_dist(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn smallest_k(cand: &mut [(f64, usize)], k: usize) -> Vec<usize> {
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp_dist);
    }
    let head = &mut cand[..k];
    head.sort_unstable_by(cmp_dist);
    head.iter().map(|c| c.1).collect()
}

/// Symmetric Chamfer distance (mean squared nearest-neighbour distance, both directions).
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> f64 {
    let one_way = |x: &PointCloud, y: &PointCloud| {
        (0..x.len())
            .map(|i| {
                let p = x.point(i);
                (0..y.len())
                    .map(|j| dist2(p, y.point(j)))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / x.len() as f64
    };
    one_way(a, b) + one_way(b, a)
}

/// Rotate about an arbitrary unit axis (Rodrigues).
pub(crate) fn rotate_about(p: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let k = axis;
    let kxp = [
        k[1] * p[2] - k[2] * p[1],
        k[2] * p[0] - k[0] * p[2],
        k[0] * p[1] - k[1] * p[0],
    ];
    let kdp = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
    [
        p[0] * c + kxp[0] * s + k[0] * kdp * (1.0 - c),
        p[1] * c + kxp[1] * s + k[1] * kdp * (1.0 - c),
        p[2] * c + kxp[2] * s + k[2] * kdp * (1.0 - c),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    /// File stem used when the sample is written to disk.
    pub name: String,
    pub cloud: PointCloud,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// A labeled collection of clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledCloud>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledCloud>, class_names: Vec<String>, split: Split) -> Result<Self> {
        let c = class_names.len();
        if let Some(s) = samples.iter().find(|s| s.label >= c) {
            return Err(Error::InvalidInput(format!(
                "sample `{}` has label {} but only {c} classes are declared",
                s.name, s.label
            )));
        }
        if split == Split::Train {
            let mut seen = vec![false; c];
            for s in &samples {
                seen[s.label] = true;
            }
            if let Some(missing) = seen.iter().position(|&x| !x) {
                return Err(Error::InvalidInput(format!(
                    "train split has no sample of class {missing} (`{}`)",
                    class_names[missing]
                )));
            }
        }
        Ok(Self {
            samples,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// The first `per_class` samples of every class, in original order.
    pub fn take_per_class(&self, per_class: usize) -> Dataset {
        let mut counts = vec![0usize; self.num_classes()];
        let samples = self
            .samples
            .iter()
            .filter(|s| {
                counts[s.label] += 1;
                counts[s.label] <= per_class
            })
            .cloned()
            .collect();
        Dataset {
            samples,
            class_names: self.class_names.clone(),
            split: self.split,
        }
    }

    /// Deterministic stratified split: every `stride`-th sample of each class
    /// goes to the second set.
    pub fn split_holdout(&self, stride: usize) -> (Dataset, Dataset) {
        let mut counts = vec![0usize; self.num_classes()];
        let (mut keep, mut held) = (Vec::new(), Vec::new());
        for s in &self.samples {
            counts[s.label] += 1;
            if stride > 0 && counts[s.label].is_multiple_of(stride) {
                held.push(s.clone());
            } else {
                keep.push(s.clone());
            }
        }
        let mk = |samples| Dataset {
            samples,
            class_names: self.class_names.clone(),
            split: self.split,
        };
        (mk(keep), mk(held))
    }
}
