//! Uniform surface sampling of a few primitive solids, used as a desk-scale
//! classification dataset.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::{normalize_unit_sphere, Point3, PointCloud};
use crate::sampling::{categorical_sample, Rng};
use crate::{Error, Result};

pub const TORUS_MAJOR: f64 = 1.0;
pub const TORUS_MINOR: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Cube,
    Pyramid,
    Torus,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Pyramid,
        ShapeKind::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Pyramid => "pyramid",
            ShapeKind::Torus => "torus",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape kind {s:?}")))
    }
}

/// Uniform samples on the raw (unnormalized) surface:
///
/// * sphere: radius 1 about the origin
/// * cube: the boundary of `[-1, 1]^3`
/// * pyramid: square base `[-1, 1]^2` at `z = -1`, apex at `(0, 0, 1)`
/// * torus: about the z-axis with radii [`TORUS_MAJOR`] and [`TORUS_MINOR`]
pub fn sample_surface(kind: ShapeKind, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("shape sampling needs at least one point"));
    }
    let points = (0..n)
        .map(|_| match kind {
            ShapeKind::Sphere => sphere_point(rng),
            ShapeKind::Cube => cube_point(rng),
            ShapeKind::Pyramid => pyramid_point(rng),
            ShapeKind::Torus => torus_point(rng),
        })
        .collect();
    PointCloud::new(points)
}

/// Surface samples normalized to the unit sphere.
pub fn synth_shape(kind: ShapeKind, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    Ok(normalize_unit_sphere(&sample_surface(kind, n, rng)?))
}

fn sphere_point(rng: &mut Rng) -> Point3 {
    loop {
        let p = Point3::new(rng.normal(), rng.normal(), rng.normal());
        let r = p.norm();
        if r > 1e-12 {
            return p * (1.0 / r);
        }
    }
}

fn cube_point(rng: &mut Rng) -> Point3 {
    let face = rng.below(6);
    let u = rng.uniform_range(-1.0, 1.0);
    let v = rng.uniform_range(-1.0, 1.0);
    let s = if face % 2 == 0 { 1.0 } else { -1.0 };
    match face / 2 {
        0 => Point3::new(s, u, v),
        1 => Point3::new(u, s, v),
        _ => Point3::new(u, v, s),
    }
}

const PYRAMID_APEX: Point3 = Point3::new(0.0, 0.0, 1.0);
const PYRAMID_BASE: [Point3; 4] = [
    Point3::new(-1.0, -1.0, -1.0),
    Point3::new(1.0, -1.0, -1.0),
    Point3::new(1.0, 1.0, -1.0),
    Point3::new(-1.0, 1.0, -1.0),
];

fn triangle_point(a: Point3, b: Point3, c: Point3, rng: &mut Rng) -> Point3 {
    let s = rng.uniform().sqrt();
    let t = rng.uniform();
    a * (1.0 - s) + b * (s * (1.0 - t)) + c * (s * t)
}

fn pyramid_point(rng: &mut Rng) -> Point3 {
    // base area 4; each lateral face has base 2 and slant height sqrt(5)
    let lateral = 5f64.sqrt();
    let areas = [4.0, lateral, lateral, lateral, lateral];
    let face = categorical_sample(&areas, rng).expect("positive face areas");
    if face == 0 {
        Point3::new(rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0), -1.0)
    } else {
        let a = PYRAMID_BASE[face - 1];
        let b = PYRAMID_BASE[face % 4];
        triangle_point(a, b, PYRAMID_APEX, rng)
    }
}

fn torus_point(rng: &mut Rng) -> Point3 {
    let u = rng.uniform_range(0.0, 2.0 * PI);
    // area element is proportional to R + r cos(v)
    let v = loop {
        let v = rng.uniform_range(0.0, 2.0 * PI);
        let accept = (TORUS_MAJOR + TORUS_MINOR * v.cos()) / (TORUS_MAJOR + TORUS_MINOR);
        if rng.uniform() < accept {
            break v;
        }
    };
    let ring = TORUS_MAJOR + TORUS_MINOR * v.cos();
    Point3::new(ring * u.cos(), ring * u.sin(), TORUS_MINOR * v.sin())
}
