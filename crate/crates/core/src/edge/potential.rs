//! Directional edge potential field: `phi = -exp(-d)` where `d` is the
//! Euclidean distance to the nearest edge pixel, paired with that edge
//! pixel's tangent.
//!
//! A field can be built at a coarser resolution than the pixel grid it is
//! stored on: with a resolution unit of `k` base pixels the distance is
//! measured in units of `k` px, which widens the basin around each edge the
//! way a `k`-times subsampled field would.

use crate::geometry::Point;

use super::{distance_transform, EdgeError, EdgeMap};

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    width: usize,
    height: usize,
    phi: Vec<f64>,
    nearest_tangent: Vec<f64>,
    sigma: f64,
    unit: f64,
}

/// Result of sampling a field at a continuous position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiSample {
    pub phi: f64,
    /// Tangent of the nearest edge; `None` outside the image.
    pub tangent: Option<f64>,
}

impl PotentialField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Base pixels per distance unit of `phi`.
    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn phi(&self, x: usize, y: usize) -> f64 {
        self.phi[y * self.width + x]
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    pub fn nearest_tangent(&self, x: usize, y: usize) -> f64 {
        self.nearest_tangent[y * self.width + x]
    }

    /// Bilinear phi and nearest-neighbour tangent. Positions more than half
    /// a pixel outside the pixel-center lattice sample as `phi = 0`.
    pub fn sample(&self, p: Point) -> PhiSample {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(p.x >= -0.5 && p.y >= -0.5 && p.x <= w - 0.5 && p.y <= h - 0.5) {
            return PhiSample {
                phi: 0.0,
                tangent: None,
            };
        }
        let x = p.x.clamp(0.0, w - 1.0);
        let y = p.y.clamp(0.0, h - 1.0);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.phi(x0, y0) * (1.0 - fx) + self.phi(x1, y0) * fx;
        let bottom = self.phi(x0, y1) * (1.0 - fx) + self.phi(x1, y1) * fx;
        let phi = top * (1.0 - fy) + bottom * fy;

        let nx = (x.round() as usize).min(self.width - 1);
        let ny = (y.round() as usize).min(self.height - 1);
        PhiSample {
            phi,
            tangent: Some(self.nearest_tangent(nx, ny)),
        }
    }
}

pub fn build_epf(edges: &EdgeMap) -> Result<PotentialField, EdgeError> {
    build_epf_scaled(edges, 1.0)
}

/// [`build_epf`] with distances measured in units of `unit` base pixels.
pub fn build_epf_scaled(edges: &EdgeMap, unit: f64) -> Result<PotentialField, EdgeError> {
    assert!(unit > 0.0, "resolution unit must be positive");
    let dt = distance_transform(edges)?;
    let (w, h) = (edges.width(), edges.height());
    let tangents = edges.tangents();
    let mut phi = Vec::with_capacity(w * h);
    let mut nearest_tangent = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            phi.push(-(-dt.distance(x, y) / unit).exp());
            nearest_tangent.push(tangents.data()[dt.nearest(x, y)]);
        }
    }
    Ok(PotentialField {
        width: w,
        height: h,
        phi,
        nearest_tangent,
        sigma: edges.sigma(),
        unit,
    })
}

/// Free-function form of [`PotentialField::sample`].
pub fn sample_phi(field: &PotentialField, p: Point) -> PhiSample {
    field.sample(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn field(w: usize, h: usize, on: &[(usize, usize, f64)]) -> PotentialField {
        let mut flags = Grid::filled(w, h, false);
        let mut tan = Grid::filled(w, h, 0.0);
        for &(x, y, t) in on {
            *flags.get_mut(x, y) = true;
            *tan.get_mut(x, y) = t;
        }
        build_epf(&EdgeMap::new(flags, tan, 1.0)).unwrap()
    }

    #[test]
    fn on_edge_is_minus_one() {
        let f = field(8, 8, &[(3, 3, 0.7)]);
        assert_eq!(f.phi(3, 3), -1.0);
        assert_eq!(f.nearest_tangent(0, 7), 0.7);
    }

    #[test]
    fn three_four_five() {
        let f = field(10, 10, &[(0, 0, 0.0)]);
        assert!((f.phi(3, 4) + (-5.0f64).exp()).abs() < 1e-15);
        assert!((f.phi(3, 4) + 0.006738).abs() < 1e-6);
    }

    #[test]
    fn coarse_unit_widens_the_basin() {
        let mut flags = Grid::filled(10, 1, false);
        *flags.get_mut(0, 0) = true;
        let f = build_epf_scaled(&EdgeMap::new(flags, Grid::filled(10, 1, 0.0), 4.0), 4.0).unwrap();
        assert!((f.phi(8, 0) + (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(f.phi(0, 0), -1.0);
    }

    #[test]
    fn edge_free_is_error() {
        let flags = Grid::filled(4, 4, false);
        let r = build_epf(&EdgeMap::new(flags, Grid::filled(4, 4, 0.0), 1.0));
        assert!(matches!(r, Err(EdgeError::NoEdges)));
    }

    #[test]
    fn sampling_policy() {
        let f = field(4, 1, &[(0, 0, 0.0)]);
        assert_eq!(f.sample(Point::new(0.0, 0.0)).phi, -1.0);
        let mid = f.sample(Point::new(0.5, 0.0)).phi;
        assert!((mid - (-1.0 + f.phi(1, 0)) / 2.0).abs() < 1e-15);
        let out = f.sample(Point::new(-3.0, 0.0));
        assert_eq!(out.phi, 0.0);
        assert!(out.tangent.is_none());
        assert!(f.sample(Point::new(f64::NAN, 0.0)).tangent.is_none());
    }

    #[test]
    fn bilinear_midpoint_between_minus_one_and_zero() {
        // a synthetic two-value field checks interpolation in isolation
        let f = PotentialField {
            width: 2,
            height: 1,
            phi: vec![-1.0, 0.0],
            nearest_tangent: vec![0.0, 0.0],
            sigma: 1.0,
            unit: 1.0,
        };
        assert_eq!(f.sample(Point::new(0.5, 0.0)).phi, -0.5);
    }
}
