//! Synthetic base images with known ground truth.
//!
//! A fixture renders the filled silhouette of a prototype shape (interior
//! 0.8, background 0.2) at a chosen pose, optionally pushing the boundary
//! along its normal by a sinusoid of arclength, then adds Gaussian noise.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{polyline_tangents, Point};

use super::{ContourPoint, ControlPoint, GrayImage, Pose, RasterError, Template};

pub const FOREGROUND: f64 = 0.8;
pub const BACKGROUND: f64 = 0.2;
pub const MIN_FIXTURE_SIZE: usize = 64;

/// Spacing of template contour samples at unit scale, px.
const TEMPLATE_SPACING: f64 = 2.0;
/// Spacing of the dense outline used for rendering and ground truth, px.
const DENSE_SPACING: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
    CShape,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::CShape];

    /// Rotation symmetry period of the undeformed outline.
    pub fn symmetry_period(self) -> f64 {
        match self {
            ShapeKind::Ellipse | ShapeKind::Rectangle => PI,
            ShapeKind::CShape => TAU,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Ellipse => "ellipse",
            ShapeKind::Rectangle => "rectangle",
            ShapeKind::CShape => "c-shape",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = RasterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ellipse" => Ok(ShapeKind::Ellipse),
            "rectangle" | "rect" => Ok(ShapeKind::Rectangle),
            "c-shape" | "cshape" | "c" => Ok(ShapeKind::CShape),
            other => Err(RasterError::InvalidSpec(format!("unknown shape `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub shape: ShapeKind,
    pub width: usize,
    pub height: usize,
    /// Placement of the prototype template; see [`Pose`].
    pub pose: Pose,
    /// Peak normal displacement of the boundary, px.
    pub deform: f64,
    /// Sinusoid periods along the full outline.
    pub lobes: u32,
    /// Phase of the boundary sinusoid, radians.
    pub phase: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise: f64,
    pub control_points: usize,
    pub seed: u64,
}

impl FixtureSpec {
    /// Square fixture with the shape centered, unit scale, no deformation or noise.
    pub fn new(shape: ShapeKind, size: usize) -> Self {
        let mut spec = Self {
            shape,
            width: size,
            height: size,
            pose: Pose::identity(),
            deform: 0.0,
            lobes: 3,
            phase: 0.0,
            noise: 0.0,
            control_points: 8,
            seed: 0,
        };
        spec.pose = spec.centered_pose(1.0, 0.0, Point::new(size as f64 / 2.0, size as f64 / 2.0));
        spec
    }

    /// Pose placing the prototype's bbox center at `center`.
    pub fn centered_pose(&self, scale: f64, rotation: f64, center: Point) -> Pose {
        let proto = Prototype::build(self.shape, self.width.min(self.height), self.control_points.max(3))
            .expect("prototype shapes are always valid templates");
        Pose::centered_at(scale, rotation, center, proto.template.center())
    }

    fn validate(&self) -> Result<(), RasterError> {
        let bad = |m: &str| Err(RasterError::InvalidSpec(m.to_string()));
        if self.width < MIN_FIXTURE_SIZE || self.height < MIN_FIXTURE_SIZE {
            return bad("fixture must be at least 64x64");
        }
        if !(self.pose.is_finite() && self.pose.scale > 0.0) {
            return bad("pose must be finite with positive scale");
        }
        if !(self.deform.is_finite() && self.deform >= 0.0) {
            return bad("deformation amplitude must be finite and >= 0");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad("noise level must be finite and >= 0");
        }
        if !self.phase.is_finite() {
            return bad("phase must be finite");
        }
        if self.control_points < super::template::MIN_CONTROL_POINTS {
            return bad("at least 3 control points are required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub image: GrayImage,
    /// Undeformed prototype.
    pub template: Template,
    pub truth_pose: Pose,
    /// Deformed, posed control point positions in the base frame.
    pub truth_control_points: Vec<Point>,
    /// Dense deformed, posed outline in the base frame (closed).
    pub truth_boundary: Vec<Point>,
}

/// Closed outline vertices (unshifted) of the prototype shape.
fn prototype_outline(shape: ShapeKind, size: usize) -> Vec<Point> {
    let base = size as f64;
    match shape {
        ShapeKind::Ellipse => {
            let (a, b) = (0.19 * base, 0.135 * base);
            (0..1440)
                .map(|i| {
                    let t = i as f64 / 1440.0 * TAU;
                    Point::new(a * t.cos(), b * t.sin())
                })
                .collect()
        }
        ShapeKind::Rectangle => {
            let (w, h) = (0.34 * base, 0.22 * base);
            vec![
                Point::new(0.0, 0.0),
                Point::new(w, 0.0),
                Point::new(w, h),
                Point::new(0.0, h),
            ]
        }
        ShapeKind::CShape => {
            let outer = 0.17 * base;
            let inner = 0.6 * outer;
            let (start, end) = (PI / 4.0, TAU - PI / 4.0);
            let steps = 540;
            let mut pts: Vec<Point> = (0..=steps)
                .map(|i| {
                    let t = start + (end - start) * i as f64 / steps as f64;
                    Point::new(outer * t.cos(), outer * t.sin())
                })
                .collect();
            pts.extend((0..=steps).map(|i| {
                let t = end - (end - start) * i as f64 / steps as f64;
                Point::new(inner * t.cos(), inner * t.sin())
            }));
            pts
        }
    }
}

/// Uniform arclength resampling of a closed polyline; returns the samples
/// and the total length.
fn resample_closed(poly: &[Point], count: usize) -> (Vec<Point>, f64) {
    let n = poly.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for i in 0..n {
        let seg = poly[i].distance(poly[(i + 1) % n]);
        cum.push(cum[i] + seg);
    }
    let total = cum[n];
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / count as f64;
        while seg + 1 < n && cum[seg + 1] <= s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let a = poly[seg];
        let b = poly[(seg + 1) % n];
        out.push(a + (b - a) * t);
    }
    (out, total)
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Displaces each sample of a uniformly resampled closed outline along
/// its outward normal by `amp * sin(2π lobes s / L + phase)`.
fn deform_outline(samples: &[Point], amp: f64, lobes: u32, phase: f64) -> Vec<Point> {
    if amp == 0.0 {
        return samples.to_vec();
    }
    let n = samples.len();
    let orientation = signed_area(samples).signum();
    samples
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let d = samples[(i + 1) % n] - samples[(i + n - 1) % n];
            let len = d.norm();
            // for positive signed area in (x, y) the outward normal is (dy, -dx)
            let normal = Point::new(d.y, -d.x) * (orientation / len);
            let s = i as f64 / n as f64;
            p + normal * (amp * (TAU * lobes as f64 * s + phase).sin())
        })
        .collect()
}

/// Even-odd scanline fill sampled at pixel centers.
fn fill_polygon(poly: &[Point], width: usize, height: usize) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let n = poly.len();
    let mut xs = Vec::new();
    for y in 0..height {
        let yc = y as f64;
        xs.clear();
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            if (a.y <= yc && b.y > yc) || (b.y <= yc && a.y > yc) {
                xs.push(a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let x0 = pair[0].ceil().max(0.0);
            let x1 = pair[1].floor().min(width as f64 - 1.0);
            if x0 > x1 {
                continue;
            }
            for x in x0 as usize..=x1 as usize {
                mask[y * width + x] = true;
            }
        }
    }
    mask
}

/// Undeformed prototype: template plus the dense outline it was sampled from.
struct Prototype {
    template: Template,
    dense: Vec<Point>,
    cp_indices: Vec<usize>,
}

impl Prototype {
    fn build(shape: ShapeKind, size: usize, control_points: usize) -> Result<Self, RasterError> {
        let outline = prototype_outline(shape, size);
        let perimeter: f64 = (0..outline.len())
            .map(|i| outline[i].distance(outline[(i + 1) % outline.len()]))
            .sum();
        let n_template = ((perimeter / TEMPLATE_SPACING).round() as usize)
            .max(super::template::MIN_CONTOUR_POINTS);
        // dense count is a multiple of the template count so template samples
        // coincide with dense samples
        let stride = (TEMPLATE_SPACING / DENSE_SPACING).round() as usize;
        let n_dense = n_template * stride;
        let (dense, _) = resample_closed(&outline, n_dense);

        // shift so the template contour bounds start at the origin
        let min = dense.iter().step_by(stride).fold(
            Point::new(f64::INFINITY, f64::INFINITY),
            |m, p| Point::new(m.x.min(p.x), m.y.min(p.y)),
        );
        let dense: Vec<Point> = dense.iter().map(|&p| p - min).collect();
        let tangents = polyline_tangents(&dense, true);

        let contour: Vec<ContourPoint> = (0..n_template)
            .map(|k| {
                let p = dense[k * stride];
                ContourPoint {
                    x: p.x,
                    y: p.y,
                    tangent: tangents[k * stride],
                }
            })
            .collect();
        // control points sit on template samples so they stay inside its bbox
        let cp_indices: Vec<usize> = (0..control_points)
            .map(|k| (k * n_template / control_points) * stride)
            .collect();
        let cps: Vec<ControlPoint> = cp_indices
            .iter()
            .enumerate()
            .map(|(k, &i)| ControlPoint {
                x: dense[i].x,
                y: dense[i].y,
                label: format!("cp{k}"),
            })
            .collect();
        Ok(Self {
            template: Template::new(contour, cps)?,
            dense,
            cp_indices,
        })
    }
}

pub fn make_fixture(spec: &FixtureSpec) -> Result<Fixture, RasterError> {
    spec.validate()?;
    let Prototype {
        template,
        dense,
        cp_indices,
    } = Prototype::build(spec.shape, spec.width.min(spec.height), spec.control_points)?;

    let deformed = deform_outline(&dense, spec.deform, spec.lobes, spec.phase);
    let pivot = template.center();
    let truth_boundary: Vec<Point> = deformed.iter().map(|&p| spec.pose.apply(p, pivot)).collect();
    let truth_control_points: Vec<Point> = cp_indices.iter().map(|&i| truth_boundary[i]).collect();

    let mask = fill_polygon(&truth_boundary, spec.width, spec.height);
    let mut data: Vec<f64> = mask
        .iter()
        .map(|&inside| if inside { FOREGROUND } else { BACKGROUND })
        .collect();
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise)
            .map_err(|e| RasterError::InvalidSpec(e.to_string()))?;
        for v in &mut data {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    let image = GrayImage::new(spec.width, spec.height, data)?;

    Ok(Fixture {
        image,
        template,
        truth_pose: spec.pose,
        truth_control_points,
        truth_boundary,
    })
}
