//! Image and template data model, file I/O, and synthetic fixtures.

mod fixture;
mod image;
mod io;
mod pose;
mod template;

use thiserror::Error;

pub use fixture::{make_fixture, Fixture, FixtureSpec, ShapeKind, BACKGROUND, FOREGROUND};
pub use image::{GrayImage, Grid};
pub use io::{decode_image, encode_pgm, encode_png, load_image, save_image};
pub use pose::{transform_point, Pose};
pub use template::{
    load_template, save_template, ContourPoint, ControlPoint, Template, MIN_CONTOUR_POINTS,
    MIN_CONTROL_POINTS,
};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("template parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("template has {0} contour points, at least 8 are required")]
    TooFewContourPoints(usize),
    #[error("template has {0} control points, at least 3 are required")]
    TooFewControlPoints(usize),
    #[error("control point `{0}` lies outside the template bbox")]
    ControlPointOutsideBbox(String),
    #[error("invalid fixture spec: {0}")]
    InvalidSpec(String),
}
