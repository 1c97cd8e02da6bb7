//! Shape localization and segmentation with deformable templates.
//!
//! A prototype template (a closed contour with tangents plus a handful of
//! control points) is located in a grayscale image in three stages:
//!
//! 1. [`roi`]: the template contour is correlated with the base image's
//!    edge map to find a few template-sized regions of interest.
//! 2. [`matching`]: a directional edge-potential energy is evaluated over a
//!    discrete pose grid inside those regions, coarse to fine over a stack
//!    of edge potential fields built at decreasing smoothing scales.
//! 3. [`swarm`]: control points are moved by particle swarm optimization;
//!    each candidate layout deforms the template through a local weighted
//!    mean warp ([`lwm`]) and is scored by the same energy plus a rigidity
//!    penalty.
//!
//! [`pipeline`] strings the stages together and adds a tracking mode that
//! reuses the previous frame's result as the starting template.

pub mod edge;
pub mod geometry;
pub mod lwm;
pub mod matching;
pub mod pipeline;
pub mod raster;
pub mod roi;
pub mod swarm;

pub use geometry::Point;
pub use raster::{GrayImage, Pose, Template};
