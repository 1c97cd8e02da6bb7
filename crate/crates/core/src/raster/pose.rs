use crate::geometry::{wrap_pi, wrap_tau, Point};

/// Similarity placement of a template on a base image.
///
/// A template-local point `p` maps to `scale * R(rotation) * (p - pivot) + pivot + displacement`,
/// where the pivot is the template bbox center. With unit scale and zero
/// rotation the displacement is exactly the shift of the template origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub scale: f64,
    /// Radians in `[0, 2π)`.
    pub rotation: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(scale: f64, rotation: f64, dx: f64, dy: f64) -> Self {
        Self {
            scale,
            rotation: wrap_tau(rotation),
            dx,
            dy,
        }
    }

    pub const fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            dx: 0.0,
            dy: 0.0,
        }
    }

    pub fn displacement(&self) -> Point {
        Point::new(self.dx, self.dy)
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.rotation.is_finite() && self.dx.is_finite() && self.dy.is_finite()
    }

    pub fn apply(&self, p: Point, pivot: Point) -> Point {
        (p - pivot).rotated(self.rotation) * self.scale + pivot + self.displacement()
    }

    /// Analytic inverse of [`Pose::apply`].
    pub fn invert(&self, q: Point, pivot: Point) -> Point {
        (q - pivot - self.displacement()).rotated(-self.rotation) * (1.0 / self.scale) + pivot
    }

    /// Undirected tangent after rotation.
    pub fn apply_tangent(&self, tangent: f64) -> f64 {
        wrap_pi(tangent + self.rotation)
    }

    /// Pose that places the template pivot at `center` in the base frame.
    pub fn centered_at(scale: f64, rotation: f64, center: Point, pivot: Point) -> Self {
        let d = center - pivot;
        Self::new(scale, rotation, d.x, d.y)
    }

    /// Where the template pivot lands in the base frame.
    pub fn center(&self, pivot: Point) -> Point {
        pivot + self.displacement()
    }
}

/// Maps a template-local point into the base frame; rotation and scaling
/// are about `pivot` (the template bbox center).
pub fn transform_point(p: Point, pose: &Pose, pivot: Point) -> Point {
    pose.apply(p, pivot)
}
