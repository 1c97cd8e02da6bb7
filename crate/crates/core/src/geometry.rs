//! Planar points and angle helpers shared by every stage.
//!
//! Coordinates follow image conventions: `x` is the column (rightward), `y`
//! is the row (downward) and integer coordinates sit on pixel centers.
//! Angles are measured counterclockwise from `+x` in `(x, y)` coordinates.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    /// Rotates about the origin by `angle` radians.
    pub fn rotated(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Wraps an angle into `[0, π)`; undirected tangents live here.
pub fn wrap_pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(PI);
    // rem_euclid can round up to exactly π for tiny negative inputs
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_tau(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Smallest absolute difference between two undirected angles, in `[0, π/2]`.
pub fn undirected_diff(a: f64, b: f64) -> f64 {
    let d = wrap_pi(a - b);
    d.min(PI - d)
}

/// Smallest absolute difference between two directed angles, in `[0, π]`.
pub fn directed_diff(a: f64, b: f64) -> f64 {
    let d = wrap_tau(a - b);
    d.min(TAU - d)
}

/// Undirected tangent at each vertex of a polyline from its neighbours
/// (central difference; one-sided at the ends of an open polyline).
pub fn polyline_tangents(points: &[Point], closed: bool) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (prev, next) = if closed {
                (points[(i + n - 1) % n], points[(i + 1) % n])
            } else {
                (points[i.saturating_sub(1)], points[(i + 1).min(n - 1)])
            };
            let d = next - prev;
            if d.x == 0.0 && d.y == 0.0 {
                0.0
            } else {
                wrap_pi(d.y.atan2(d.x))
            }
        })
        .collect()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.x * ab.x + ab.y * ab.y;
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len_sq).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Distance from `p` to a polyline (closed polylines include the wrap segment).
pub fn point_polyline_distance(p: Point, poly: &[Point], closed: bool) -> f64 {
    match poly.len() {
        0 => f64::INFINITY,
        1 => p.distance(poly[0]),
        n => {
            let segs = if closed { n } else { n - 1 };
            (0..segs)
                .map(|i| point_segment_distance(p, poly[i], poly[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

/// Mean over `points` of the distance to a closed reference polyline.
pub fn mean_distance_to_polyline(points: &[Point], reference: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points
        .iter()
        .map(|&p| point_polyline_distance(p, reference, true))
        .sum::<f64>()
        / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_pi_stays_half_open() {
        assert_eq!(wrap_pi(PI), 0.0);
        assert!((wrap_pi(3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert!((wrap_pi(-PI / 4.0) - 3.0 * PI / 4.0).abs() < 1e-12);
        assert!(wrap_pi(-1e-18) < PI);
    }

    #[test]
    fn undirected_diff_is_symmetric_mod_pi() {
        assert!((undirected_diff(0.1, PI + 0.1)).abs() < 1e-12);
        assert!((undirected_diff(0.0, PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert!((undirected_diff(0.05, PI - 0.05) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_counterclockwise_in_xy() {
        let p = Point::new(1.0, 0.0).rotated(PI / 2.0);
        assert!(p.x.abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn polyline_distance_square() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 4.0),
            Point::new(0.0, 4.0),
        ];
        assert!((point_polyline_distance(Point::new(2.0, 1.0), &sq, true) - 1.0).abs() < 1e-12);
        assert!((point_polyline_distance(Point::new(-3.0, 2.0), &sq, true) - 3.0).abs() < 1e-12);
    }
}
