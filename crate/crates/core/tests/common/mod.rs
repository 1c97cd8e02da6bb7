#![allow(dead_code)]

use deftemp::edge::{build_epf, EdgeMap, PotentialField};
use deftemp::geometry::{mean_distance_to_polyline, wrap_pi};
use deftemp::matching::DEFAULT_SCALES;
use deftemp::pipeline::SegmentationResult;
use deftemp::raster::{make_fixture, Fixture, FixtureSpec, Grid, Pose, ShapeKind};
use deftemp::{Point, Template};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SHAPES: [ShapeKind; 3] = [ShapeKind::Ellipse, ShapeKind::Rectangle, ShapeKind::CShape];

/// Member `k` of the pose-recovery family: shapes cycle, scale on the grid,
/// rotation a multiple of 15 degrees, integer offset within 40 px of center.
pub fn family_member(k: usize, noise: f64) -> (FixtureSpec, Fixture) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
    let mut spec = FixtureSpec::new(SHAPES[k % 3], 256);
    let s = DEFAULT_SCALES[rng.random_range(0..DEFAULT_SCALES.len())];
    let rot = (rng.random_range(0..24) as f64 * 15.0).to_radians();
    let dx = rng.random_range(-40..=40) as f64;
    let dy = rng.random_range(-40..=40) as f64;
    spec.pose = spec.centered_pose(s, rot, Point::new(128.0 + dx, 128.0 + dy));
    spec.noise = noise;
    spec.seed = k as u64;
    let f = make_fixture(&spec).unwrap();
    (spec, f)
}

/// Small-object fixture `k` for ROI coverage: scale at most 1.
pub fn small_member(k: u64, noise: f64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(k);
    let mut spec = FixtureSpec::new(SHAPES[k as usize % 3], 256);
    let s = [0.8, 0.9, 1.0][rng.random_range(0..3)];
    let rot = (rng.random_range(0..24) as f64 * 15.0).to_radians();
    let cx = 128.0 + rng.random_range(-40..=40) as f64;
    let cy = 128.0 + rng.random_range(-40..=40) as f64;
    spec.pose = spec.centered_pose(s, rot, Point::new(cx, cy));
    spec.noise = noise;
    spec.seed = k;
    make_fixture(&spec).unwrap()
}

/// Ellipse with a 3 px sinusoidal boundary at pose variant `k`.
pub fn deformed_ellipse(k: usize) -> Fixture {
    deformed_ellipse_with(k, 8)
}

/// [`deformed_ellipse`] with `control_points` spread along the outline.
pub fn deformed_ellipse_with(k: usize, control_points: usize) -> Fixture {
    let variants = [
        (0.52, 40.0, 20.0, 0.0),
        (2.8, 10.0, -5.0, 1.0),
        (4.71, -30.0, 25.0, 2.0),
        (5.76, 0.0, 0.0, 0.5),
        (2.0, 20.0, -30.0, 3.0),
        (1.0, -25.0, -10.0, 4.0),
    ];
    let (rot, dx, dy, phase) = variants[k % variants.len()];
    let mut spec = FixtureSpec::new(ShapeKind::Ellipse, 256);
    spec.phase = phase;
    spec.deform = 3.0;
    spec.noise = 0.03;
    spec.seed = k as u64;
    spec.control_points = control_points;
    spec.pose = Pose::new(1.0, rot, spec.pose.dx + dx, spec.pose.dy + dy);
    make_fixture(&spec).unwrap()
}

/// Ellipse translating 4 px per frame, mildly deformed.
pub fn moving_sequence(frames: usize) -> Vec<Fixture> {
    let mut spec = FixtureSpec::new(ShapeKind::Ellipse, 256);
    spec.noise = 0.03;
    spec.deform = 2.0;
    let base = spec.pose;
    (0..frames)
        .map(|k| {
            spec.pose = Pose::new(base.scale, 0.3, base.dx - 10.0 + 4.0 * k as f64, base.dy);
            spec.seed = k as u64;
            make_fixture(&spec).unwrap()
        })
        .collect()
}

/// Mean distance from the result contour to the fixture's true boundary.
pub fn contour_error(r: &SegmentationResult, f: &Fixture) -> f64 {
    let pts: Vec<Point> = r.contour.iter().map(|c| c.point()).collect();
    mean_distance_to_polyline(&pts, &f.truth_boundary)
}

/// Rotation difference modulo the shape's symmetry period.
pub fn rotation_error(a: f64, b: f64, period: f64) -> f64 {
    let m = (a - b).rem_euclid(period);
    m.min(period - m)
}

/// Edge map drawn from the posed template itself: every pixel touching a
/// contour point's bilinear footprint is an edge carrying that point's tangent.
pub fn self_edges(t: &Template, pose: &Pose, width: usize, height: usize) -> EdgeMap {
    let mut flags = Grid::filled(width, height, false);
    let mut tangents = Grid::filled(width, height, 0.0);
    for c in t.posed_contour(pose) {
        let (x0, y0) = (c.x.floor() as i64, c.y.floor() as i64);
        for (x, y) in [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)] {
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                *flags.get_mut(x as usize, y as usize) = true;
                *tangents.get_mut(x as usize, y as usize) = wrap_pi(c.tangent);
            }
        }
    }
    EdgeMap::new(flags, tangents, 1.0)
}

pub fn self_field(t: &Template, pose: &Pose, width: usize, height: usize) -> PotentialField {
    build_epf(&self_edges(t, pose, width, height)).unwrap()
}

/// Direct double sum over kernel taps with zero padding.
pub fn conv_oracle(k: &Grid<f64>, b: &Grid<f64>) -> Grid<f64> {
    let (kw, kh, bw, bh) = (k.width(), k.height(), b.width(), b.height());
    Grid::from_fn(kw + bw - 1, kh + bh - 1, |ox, oy| {
        let mut s = 0.0;
        for y in 0..kh {
            for x in 0..kw {
                let (bx, by) = (ox as i64 - x as i64, oy as i64 - y as i64);
                if bx >= 0 && by >= 0 && (bx as usize) < bw && (by as usize) < bh {
                    s += k.at(x, y) * b.at(bx as usize, by as usize);
                }
            }
        }
        s
    })
}

/// Squared distance to the nearest `true` cell by exhaustive scan.
pub fn edt_oracle(mask: &Grid<bool>) -> Vec<u64> {
    let (w, h) = (mask.width(), mask.height());
    let edges: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| *mask.get(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            out.push(edges.iter().map(|&(ex, ey)| ((ex - x).pow(2) + (ey - y).pow(2)) as u64).min().unwrap());
        }
    }
    out
}
