//! Points and axis-aligned bounding boxes.
//!
//! Coordinates are always stored with three components. Meshes living in one
//! or two space dimensions keep the unused trailing components at exactly 0.

use std::fmt;
use std::ops::{Add, Mul, Sub};

/// A point (or vector) in 3D space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Squared Euclidean distance. Every distance comparison in the crate goes
    /// through this function so that different search paths agree bit-for-bit.
    #[inline]
    pub fn distance_squared(&self, other: &Point) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        let dz = self.0[2] - other.0[2];
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(&self, other: &Point) -> Point {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = other.0;
        Point([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Arithmetic mean of a non-empty set of points.
    pub fn centroid<'a>(points: impl IntoIterator<Item = &'a Point>) -> Point {
        let mut sum = [0.0; 3];
        let mut count = 0usize;
        for p in points {
            for d in 0..3 {
                sum[d] += p.0[d];
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        Point([sum[0] * inv, sum[1] * inv, sum[2] * inv])
    }
}

impl From<[f64; 3]> for Point {
    fn from(c: [f64; 3]) -> Self {
        Point(c)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    /// The empty box: `extend` on it yields the box of the added point.
    pub const EMPTY: Aabb = Aabb {
        min: Point([f64::INFINITY; 3]),
        max: Point([f64::NEG_INFINITY; 3]),
    };

    pub fn new(min: Point, max: Point) -> Self {
        Aabb { min, max }
    }

    pub fn unit_cube() -> Self {
        Aabb::new(Point::ORIGIN, Point([1.0; 3]))
    }

    pub fn from_point(p: Point) -> Self {
        Aabb { min: p, max: p }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Aabb::EMPTY;
        for p in points {
            b.extend_point(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|d| self.min.0[d] > self.max.0[d])
    }

    pub fn extend_point(&mut self, p: &Point) {
        for d in 0..3 {
            self.min.0[d] = self.min.0[d].min(p.0[d]);
            self.max.0[d] = self.max.0[d].max(p.0[d]);
        }
    }

    pub fn extend(&mut self, other: &Aabb) {
        for d in 0..3 {
            self.min.0[d] = self.min.0[d].min(other.min.0[d]);
            self.max.0[d] = self.max.0[d].max(other.max.0[d]);
        }
    }

    pub fn union(mut self, other: &Aabb) -> Aabb {
        self.extend(other);
        self
    }

    pub fn center(&self) -> Point {
        Point([
            0.5 * (self.min.0[0] + self.max.0[0]),
            0.5 * (self.min.0[1] + self.max.0[1]),
            0.5 * (self.min.0[2] + self.max.0[2]),
        ])
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.max.0[axis] - self.min.0[axis]
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.min.distance(&self.max)
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|d| self.min.0[d] <= other.min.0[d] && other.max.0[d] <= self.max.0[d])
    }

    /// Whether `p` lies in the box enlarged by `eps` on every side.
    pub fn contains_point(&self, p: &Point, eps: f64) -> bool {
        (0..3).all(|d| self.min.0[d] - eps <= p.0[d] && p.0[d] <= self.max.0[d] + eps)
    }

    /// Squared distance from `p` to the closest point of the box; 0 inside.
    ///
    /// For a degenerate box holding a single point this evaluates exactly the
    /// same floating-point expression as [`Point::distance_squared`].
    #[inline]
    pub fn distance_squared(&self, p: &Point) -> f64 {
        let clamped = Point([
            p.0[0].clamp(self.min.0[0], self.max.0[0]),
            p.0[1].clamp(self.min.0[1], self.max.0[1]),
            p.0[2].clamp(self.min.0[2], self.max.0[2]),
        ]);
        p.distance_squared(&clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_box_distance_matches_point_distance() {
        let p = Point::new(0.1, -3.0, 7.25);
        let q = Point::new(1.0 / 3.0, 2.0, -0.5);
        assert_eq!(Aabb::from_point(p).distance_squared(&q), p.distance_squared(&q));
    }

    #[test]
    fn box_distance_is_zero_inside() {
        let b = Aabb::unit_cube();
        assert_eq!(b.distance_squared(&Point::new(0.5, 0.2, 0.9)), 0.0);
        assert_eq!(b.distance_squared(&Point::new(2.0, 0.5, 0.5)), 1.0);
    }

    #[test]
    fn empty_box_extends_to_point() {
        let mut b = Aabb::EMPTY;
        assert!(b.is_empty());
        b.extend_point(&Point::new(1.0, 2.0, 3.0));
        assert_eq!(b.min, b.max);
        assert_eq!(b.diagonal(), 0.0);
    }
}
