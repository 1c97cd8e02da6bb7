//! Edge detection and the directional edge potential field.

mod canny;
mod distance;
mod potential;

use thiserror::Error;

use crate::raster::Grid;

pub use canny::{detect_edges, detect_edges_with, gaussian_blur, gradients, CannyConfig, MIN_SIGMA};
pub use distance::{distance_transform, DistanceMap};
pub use potential::{build_epf, build_epf_scaled, sample_phi, PhiSample, PotentialField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("sigma {0} is below the minimum of 0.5")]
    SigmaTooSmall(f64),
    #[error("edge map contains no edge pixels")]
    NoEdges,
}

/// Per-pixel edge flags with an undirected tangent (radians in `[0, π)`)
/// wherever a pixel is an edge. Tangents elsewhere are zero and meaningless.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    is_edge: Grid<bool>,
    tangent: Grid<f64>,
    sigma: f64,
}

impl EdgeMap {
    pub fn new(is_edge: Grid<bool>, tangent: Grid<f64>, sigma: f64) -> Self {
        assert_eq!(
            (is_edge.width(), is_edge.height()),
            (tangent.width(), tangent.height())
        );
        Self {
            is_edge,
            tangent,
            sigma,
        }
    }

    pub fn width(&self) -> usize {
        self.is_edge.width()
    }

    pub fn height(&self) -> usize {
        self.is_edge.height()
    }

    /// Smoothing scale the map was detected at.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_edge(&self, x: usize, y: usize) -> bool {
        self.is_edge.at(x, y)
    }

    pub fn tangent_at(&self, x: usize, y: usize) -> f64 {
        self.tangent.at(x, y)
    }

    pub fn flags(&self) -> &Grid<bool> {
        &self.is_edge
    }

    pub fn tangents(&self) -> &Grid<f64> {
        &self.tangent
    }

    pub fn count(&self) -> usize {
        self.is_edge.data().iter().filter(|&&e| e).count()
    }

    /// `(x, y)` of every edge pixel in row-major order.
    pub fn edge_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width();
        self.is_edge
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(i, _)| (i % w, i / w))
    }
}
