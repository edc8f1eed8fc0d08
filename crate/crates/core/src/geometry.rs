//! Planar geometry: poses, oriented boxes and simple polygons.
//!
//! Everything here is a pure function over `Copy` values. Collision between
//! footprints is a separating-axis test; "inside the drivable area" is a
//! boundary-inclusive even-odd test on the footprint center.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gaps at or below this many meters are reported as intersections.
pub const SEPARATION_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box half extents must be positive, got {half_length} x {half_width}")]
    DegenerateBox { half_length: f64, half_width: f64 },
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon must be wound counter-clockwise")]
    Clockwise,
    #[error("non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    // in-range angles pass through bit-exact
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Position and heading in the world frame. Heading is kept in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_heading(self.heading)
    }

    pub fn translated(&self, delta: Vec2) -> Pose2D {
        Pose2D {
            x: self.x + delta.x,
            y: self.y + delta.y,
            heading: self.heading,
        }
    }

    pub fn rotated(&self, delta_heading: f64) -> Pose2D {
        Pose2D::new(self.x, self.y, self.heading + delta_heading)
    }
}

/// A rotated rectangle: vehicle or agent footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Pose2D,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose2D, half_length: f64, half_width: f64) -> Result<Self, GeometryError> {
        if !(half_length > 0.0 && half_width > 0.0) || !half_length.is_finite() || !half_width.is_finite() {
            return Err(GeometryError::DegenerateBox {
                half_length,
                half_width,
            });
        }
        Ok(Self {
            center,
            half_length,
            half_width,
        })
    }

    /// Box from full length and width.
    pub fn from_dims(center: Pose2D, length: f64, width: f64) -> Result<Self, GeometryError> {
        Self::new(center, length / 2.0, width / 2.0)
    }

    pub fn with_center(&self, center: Pose2D) -> OrientedBox {
        OrientedBox { center, ..*self }
    }

    /// Rear-right, front-right, front-left, rear-left: counter-clockwise.
    pub fn corners(&self) -> [Vec2; 4] {
        let c = self.center.position();
        let fwd = self.center.forward() * self.half_length;
        let left = self.center.forward().perp() * self.half_width;
        [c - fwd - left, c + fwd - left, c + fwd + left, c - fwd + left]
    }

    /// Radius of the circle through the corners.
    pub fn bounding_radius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    fn axes(&self) -> [Vec2; 2] {
        let fwd = self.center.forward();
        [fwd, fwd.perp()]
    }

    /// Interval of the box projected on a unit axis.
    fn project(&self, axis: Vec2) -> (f64, f64) {
        let mid = self.center.position().dot(axis);
        let [fwd, left] = self.axes();
        let reach = self.half_length * fwd.dot(axis).abs() + self.half_width * left.dot(axis).abs();
        (mid - reach, mid + reach)
    }
}

/// Separating-axis test over the four edge normals. Touching boxes intersect.
pub fn obb_intersects(a: &OrientedBox, b: &OrientedBox) -> bool {
    let reach = a.bounding_radius() + b.bounding_radius();
    let d = a.center.position() - b.center.position();
    if d.dot(d) > reach * reach + SEPARATION_EPS {
        return false;
    }
    for axis in a.axes().into_iter().chain(b.axes()) {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        if bmin - amax > SEPARATION_EPS || amin - bmax > SEPARATION_EPS {
            return false;
        }
    }
    true
}

/// Simple, counter-clockwise polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                // adjacent edges share a vertex and are allowed to touch there
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (p1, p2) = (vertices[i], vertices[(i + 1) % n]);
                let (q1, q2) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(p1, p2, q1, q2) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        let poly = Self { vertices };
        if poly.signed_area() <= 0.0 {
            return Err(GeometryError::Clockwise);
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.cross(b)).sum::<f64>() / 2.0
    }

    pub fn centroid(&self) -> Vec2 {
        let area = self.signed_area();
        let (cx, cy) = self.edges().fold((0.0, 0.0), |(cx, cy), (a, b)| {
            let w = a.cross(b);
            (cx + (a.x + b.x) * w, cy + (a.y + b.y) * w)
        });
        Vec2::new(cx / (6.0 * area), cy / (6.0 * area))
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

impl Serialize for Polygon {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.vertices.iter().map(|v| [v.x, v.y]))
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(deserializer)?;
        Polygon::new(raw.into_iter().map(|[x, y]| Vec2::new(x, y)).collect())
            .map_err(serde::de::Error::custom)
    }
}

fn orientation(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    let ab = b - a;
    let len = ab.norm();
    if len == 0.0 {
        return p.distance(a) <= SEPARATION_EPS;
    }
    if (ab.cross(p - a) / len).abs() > SEPARATION_EPS {
        return false;
    }
    let t = (p - a).dot(ab) / (len * len);
    (-SEPARATION_EPS..=1.0 + SEPARATION_EPS).contains(&t)
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orientation(q1, q2, p1);
    let d2 = orientation(q1, q2, p2);
    let d3 = orientation(p1, p2, q1);
    let d4 = orientation(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(p1, q1, q2) || on_segment(p2, q1, q2) || on_segment(q1, p1, p2) || on_segment(q2, p1, p2)
}

/// Even-odd containment with the boundary counted as inside.
pub fn polygon_contains(poly: &Polygon, p: Vec2) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// A box belongs to the area when its center does; partial overlap with the
/// boundary is enough.
pub fn box_within_area(b: &OrientedBox, area: &Polygon) -> bool {
    polygon_contains(area, b.center.position())
}
