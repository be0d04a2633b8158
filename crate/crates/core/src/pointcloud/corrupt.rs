//! Robustness corruptions: Gaussian jitter, rotation, scaling, dropout.

use std::fmt;
use std::str::FromStr;

use super::{resample, Point3, PointCloud};
use crate::sampling::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::invalid(format!("unknown axis {s:?}"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every coordinate.
pub fn corrupt_jitter(cloud: &PointCloud, sigma: f64, rng: &mut Rng) -> Result<PointCloud> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("jitter sigma must be >= 0, got {sigma}")));
    }
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let dx = rng.normal() * sigma;
            let dy = rng.normal() * sigma;
            let dz = rng.normal() * sigma;
            *p + Point3::new(dx, dy, dz)
        })
        .collect();
    PointCloud::new(points)
}

/// Rotates every point about the origin around `axis`.
pub fn corrupt_rotate(cloud: &PointCloud, axis: Axis, angle_degrees: f64) -> Result<PointCloud> {
    if !angle_degrees.is_finite() {
        return Err(Error::invalid("rotation angle must be finite"));
    }
    let (s, c) = angle_degrees.to_radians().sin_cos();
    Ok(cloud.map(|p| match axis {
        Axis::X => Point3::new(p.x, c * p.y - s * p.z, s * p.y + c * p.z),
        Axis::Y => Point3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z),
        Axis::Z => Point3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z),
    }))
}

pub fn corrupt_scale(cloud: &PointCloud, factor: f64) -> Result<PointCloud> {
    if !factor.is_finite() {
        return Err(Error::invalid("scale factor must be finite"));
    }
    Ok(cloud.map(|p| *p * factor))
}

/// Removes `floor(fraction * n)` uniformly chosen points, then resamples the
/// survivors back to `n` points so the cardinality is unchanged.
pub fn corrupt_dropout(cloud: &PointCloud, fraction: f64, rng: &mut Rng) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "dropout fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let n = cloud.len();
    let dropped = (fraction * n as f64).floor() as usize;
    let mut keep = rng.choose_distinct(n, n - dropped);
    keep.sort_unstable();
    resample(&cloud.select(&keep), n, rng)
}
