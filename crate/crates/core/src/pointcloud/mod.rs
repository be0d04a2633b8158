//! Point cloud types and preprocessing.

mod corrupt;
mod io;
mod shapes;

use std::ops::{Add, Mul, Sub};

pub use corrupt::{corrupt_dropout, corrupt_jitter, corrupt_rotate, corrupt_scale, Axis};
pub use io::{
    parse_point_labels, parse_saliency, parse_xyz, read_point_labels, read_saliency, read_xyz,
    read_values, write_point_labels, write_saliency, write_values, write_xyz,
};
pub use shapes::{sample_surface, synth_shape, ShapeKind, TORUS_MAJOR, TORUS_MINOR};

use crate::sampling::Rng;
use crate::{Error, Result};

/// Tolerance used when validating that a soft label sums to one.
pub const LABEL_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &Point3) -> f64 {
        (*self - *other).norm_sq()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    /// `t * self + (1 - t) * other`.
    pub fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        *self * t + *other * (1.0 - t)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// A non-empty sequence of finite points. Order is meaningful: saliency
/// maps, per-point labels and assignments all index into it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() % 3 != 0 {
            return Err(Error::invalid(format!(
                "flat buffer length {} is not a multiple of 3",
                coords.len()
            )));
        }
        Self::new(coords.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    pub(crate) fn from_vec_unchecked(points: Vec<Point3>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.to_array()).collect()
    }

    pub fn centroid(&self) -> Point3 {
        let sum = self.points.iter().fold(Point3::ORIGIN, |acc, p| acc + *p);
        sum * (1.0 / self.points.len() as f64)
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(Point3::norm).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(&Point3) -> Point3) -> PointCloud {
        PointCloud::from_vec_unchecked(self.points.iter().map(f).collect())
    }

    /// Points picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud::from_vec_unchecked(indices.iter().map(|&i| self.points[i]).collect())
    }
}

/// Centers the cloud at its centroid and scales it so the farthest point
/// lies on the unit sphere. A cloud whose points all coincide is returned
/// centered but unscaled.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let centered: Vec<Point3> = cloud.points().iter().map(|p| *p - c).collect();
    let max = centered.iter().map(Point3::norm).fold(0.0, f64::max);
    if max == 0.0 {
        return PointCloud::from_vec_unchecked(centered);
    }
    let inv = 1.0 / max;
    PointCloud::from_vec_unchecked(centered.into_iter().map(|p| p * inv).collect())
}

/// Brings a cloud to exactly `n_target` points. Downsampling keeps a uniform
/// subset (original order preserved); upsampling keeps every original point
/// and appends uniform draws with replacement.
pub fn resample(cloud: &PointCloud, n_target: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n_target == 0 {
        return Err(Error::invalid("resample: target count must be at least 1"));
    }
    let n = cloud.len();
    if n >= n_target {
        let mut keep = rng.choose_distinct(n, n_target);
        keep.sort_unstable();
        Ok(cloud.select(&keep))
    } else {
        let mut points = cloud.points().to_vec();
        points.extend((n..n_target).map(|_| cloud.points()[rng.below(n)]));
        Ok(PointCloud::from_vec_unchecked(points))
    }
}

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("soft label needs at least one class"));
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
        {
            return Err(Error::invalid(format!(
                "soft label entry {i} = {} outside [0, 1]",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > LABEL_SUM_TOL {
            return Err(Error::invalid(format!("soft label sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for {classes} classes"
            )));
        }
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    /// `lambda * a + (1 - lambda) * b`, componentwise.
    pub fn mix(a: &SoftLabel, b: &SoftLabel, lambda: f64) -> Result<Self> {
        if a.classes() != b.classes() {
            return Err(Error::invalid(format!(
                "label spaces differ: {} vs {} classes",
                a.classes(),
                b.classes()
            )));
        }
        let probs = a
            .probs
            .iter()
            .zip(&b.probs)
            .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Non-negative per-point importance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    scores: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid(format!(
                "saliency score {i} = {} is negative or not finite",
                scores[i]
            )));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Per-point class indices for segmentation, tagged with the size of the
/// label space they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLabels {
    classes: usize,
    labels: Vec<usize>,
}

impl PointLabels {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l >= classes) {
            return Err(Error::invalid(format!(
                "point label {i} = {} out of range for {classes} classes",
                labels[i]
            )));
        }
        Ok(Self { classes, labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A dataset record: cloud, object label, and optional per-point data.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub label: SoftLabel,
    pub point_labels: Option<PointLabels>,
    pub saliency: Option<SaliencyMap>,
}

impl LabeledCloud {
    pub fn new(cloud: PointCloud, label: SoftLabel) -> Self {
        Self {
            cloud,
            label,
            point_labels: None,
            saliency: None,
        }
    }

    pub fn with_saliency(mut self, saliency: SaliencyMap) -> Result<Self> {
        if saliency.len() != self.cloud.len() {
            return Err(Error::invalid(format!(
                "saliency has {} scores for {} points",
                saliency.len(),
                self.cloud.len()
            )));
        }
        self.saliency = Some(saliency);
        Ok(self)
    }

    pub fn with_point_labels(mut self, labels: PointLabels) -> Result<Self> {
        if labels.len() != self.cloud.len() {
            return Err(Error::invalid(format!(
                "{} point labels for {} points",
                labels.len(),
                self.cloud.len()
            )));
        }
        self.point_labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}
