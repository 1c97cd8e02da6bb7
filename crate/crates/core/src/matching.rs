//! Stage 2: coarse-to-fine search over a discrete pose grid.
//!
//! The energy of a posed template is the mean over contour points of
//! `1 + phi * |cos(beta)|`, where `beta` is the angle between the template
//! tangent and the tangent of the nearest image edge. It lies in `[0, 1]`
//! and is zero only when every contour point sits on an aligned edge.

use std::collections::HashSet;
use std::f64::consts::TAU;

use rayon::prelude::*;
use thiserror::Error;

use crate::edge::{build_epf_scaled, detect_edges_with, CannyConfig, EdgeError, EdgeMap, PotentialField};
use crate::geometry::{directed_diff, undirected_diff, Point};
use crate::lwm::{apply_warp, warp_tangent, WarpModel};
use crate::raster::{ContourPoint, GrayImage, Pose, Template};
use crate::roi::RoiSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("template has no contour points")]
    EmptyTemplate,
    #[error("nothing to search: no ROI windows and no seeds")]
    NoSearchSpace,
    #[error("no candidate below the level {level} threshold ({evaluated} poses evaluated, best rejected energy {best_rejected:?})")]
    NoCandidates {
        level: usize,
        evaluated: usize,
        best_rejected: Option<f64>,
    },
    #[error("invalid pose grid: {0}")]
    InvalidGrid(String),
    #[error("invalid pyramid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Edge(#[from] EdgeError),
}

/// Discrete poses: rotations, scales and one translation stride per level.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGrid {
    pub rotations: Vec<f64>,
    pub scales: Vec<f64>,
    /// Translation stride in px, coarsest level first.
    pub strides: Vec<f64>,
}

pub const DEFAULT_SCALES: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.25];

impl PoseGrid {
    /// `steps` rotations evenly spaced over `[0, 2π)`.
    pub fn rotations(steps: usize) -> Vec<f64> {
        (0..steps).map(|k| TAU * k as f64 / steps as f64).collect()
    }

    /// Strides for `levels` levels: `max(1, min bbox side / 4)` at the
    /// coarsest, 1 px at the finest, geometric in between.
    pub fn default_strides(template: &Template, levels: usize) -> Vec<f64> {
        let (w, h) = template.bbox();
        let coarse = (w.min(h) / 4.0).floor().max(1.0);
        if levels == 1 {
            return vec![1.0];
        }
        (0..levels)
            .map(|k| {
                let f = 1.0 - k as f64 / (levels - 1) as f64;
                coarse.powf(f).round().max(1.0)
            })
            .collect()
    }

    /// 15° rotations, the default scale set, and default strides.
    pub fn default_for(template: &Template, levels: usize) -> Self {
        Self {
            rotations: Self::rotations(24),
            scales: DEFAULT_SCALES.to_vec(),
            strides: Self::default_strides(template, levels),
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::InvalidGrid(m.to_string()));
        if self.rotations.is_empty() || self.scales.is_empty() || self.strides.is_empty() {
            return bad("rotations, scales and strides must be non-empty");
        }
        if self.rotations.iter().any(|r| !r.is_finite()) {
            return bad("rotations must be finite");
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("scales must be positive");
        }
        if self.strides.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("strides must be positive");
        }
        if self.strides.windows(2).any(|w| w[1] > w[0]) {
            return bad("strides must not increase towards finer levels");
        }
        Ok(())
    }

    fn stride(&self, level: usize) -> f64 {
        self.strides[level.min(self.strides.len() - 1)]
    }

    fn nearest_rotation(&self, r: f64) -> usize {
        nearest_index(&self.rotations, |g| directed_diff(g, r).abs())
    }

    fn nearest_scale(&self, s: f64) -> usize {
        nearest_index(&self.scales, |g| (g - s).abs())
    }
}

fn nearest_index(values: &[f64], dist: impl Fn(f64) -> f64) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if dist(v) < dist(values[best]) {
            best = i;
        }
    }
    best
}

/// Per-level edge scales, thresholds and candidate caps, coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidSchedule {
    pub sigmas: Vec<f64>,
    pub energy_thresholds: Vec<f64>,
    pub keep_top: Vec<usize>,
}

impl Default for PyramidSchedule {
    fn default() -> Self {
        Self {
            sigmas: vec![4.0, 2.0, 1.0],
            energy_thresholds: vec![0.75, 0.75, 0.75],
            keep_top: vec![16, 8, 8],
        }
    }
}

impl PyramidSchedule {
    pub fn levels(&self) -> usize {
        self.sigmas.len()
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::InvalidSchedule(m.to_string()));
        let n = self.sigmas.len();
        if n == 0 {
            return bad("at least one level is required");
        }
        if self.energy_thresholds.len() != n || self.keep_top.len() != n {
            return bad("sigmas, thresholds and keep_top must have equal length");
        }
        if self.sigmas.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("sigmas must be strictly decreasing");
        }
        if self.energy_thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return bad("thresholds must lie in (0, 1)");
        }
        if self.keep_top.contains(&0) {
            return bad("keep_top must be positive");
        }
        Ok(())
    }

    /// Distance unit of the level's potential field in base px.
    pub fn unit(&self, level: usize) -> f64 {
        self.sigmas[level] / self.sigmas[self.sigmas.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchCandidate {
    pub pose: Pose,
    pub energy: f64,
    /// Resolution index, 0 = coarsest.
    pub level: usize,
}

/// Energy of contour points already in the base frame.
pub fn contour_energy(points: &[ContourPoint], field: &PotentialField) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let total: f64 = points
        .iter()
        .map(|c| {
            let s = field.sample(c.point());
            match s.tangent {
                Some(t) => 1.0 + s.phi * undirected_diff(c.tangent, t).cos(),
                None => 1.0,
            }
        })
        .sum();
    (total / points.len() as f64).clamp(0.0, 1.0)
}

/// Energy of `template` under `pose`, optionally warped first. The warp is
/// applied in the template frame; tangents follow the warped curve.
pub fn energy(
    template: &Template,
    pose: &Pose,
    warp: Option<&WarpModel>,
    field: &PotentialField,
) -> Result<f64, MatchError> {
    if template.contour().is_empty() {
        return Err(MatchError::EmptyTemplate);
    }
    let posed = match warp {
        None => template.posed_contour(pose),
        Some(w) => {
            let pivot = template.center();
            template
                .contour()
                .iter()
                .map(|c| {
                    let q = pose.apply(apply_warp(w, c.point()).point, pivot);
                    ContourPoint {
                        x: q.x,
                        y: q.y,
                        tangent: pose.apply_tangent(warp_tangent(w, c.point(), c.tangent)),
                    }
                })
                .collect()
        }
    };
    Ok(contour_energy(&posed, field))
}

/// Candidates surviving one level together with search diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub level: usize,
    pub candidates: Vec<MatchCandidate>,
    pub evaluated: usize,
    /// Lowest energy among poses that failed the threshold.
    pub best_rejected: Option<f64>,
}

/// Smallest contour separation, px, at which two candidates count as
/// distinct hypotheses.
const MIN_SEPARATION: f64 = 2.0;
/// Contour points of a candidate used when comparing it with kept ones.
const SEPARATION_SAMPLES: usize = 32;

/// Mean distance from a subsample of `a` to the nearest point of `b`.
fn chamfer(a: &[Point], b: &[Point]) -> f64 {
    let step = (a.len() / SEPARATION_SAMPLES).max(1);
    let (mut sum, mut n) = (0.0, 0usize);
    for p in a.iter().step_by(step) {
        let d2 = b.iter().map(|q| p.distance_sq(*q)).fold(f64::INFINITY, f64::min);
        sum += d2.sqrt();
        n += 1;
    }
    sum / n as f64
}

/// Greedy selection in energy order that skips candidates whose posed
/// contour lies within `separation` px (on average) of one already kept.
/// Symmetric shapes produce several poses with identical outlines; without
/// this they would crowd out distinct hypotheses.
fn select_distinct(template: &Template, sorted: &[MatchCandidate], keep: usize, separation: f64) -> Vec<MatchCandidate> {
    let mut kept: Vec<(MatchCandidate, Vec<Point>)> = Vec::with_capacity(keep);
    for c in sorted {
        if kept.len() == keep {
            break;
        }
        let outline: Vec<Point> = template.posed_contour(&c.pose).iter().map(ContourPoint::point).collect();
        if kept.iter().all(|(_, o)| chamfer(&outline, o) > separation) {
            kept.push((*c, outline));
        }
    }
    kept.into_iter().map(|(c, _)| c).collect()
}

fn pose_key(p: &Pose) -> [u64; 4] {
    [p.rotation.to_bits(), p.scale.to_bits(), p.dx.to_bits(), p.dy.to_bits()]
}

fn candidate_order(a: &MatchCandidate, b: &MatchCandidate) -> std::cmp::Ordering {
    a.energy
        .total_cmp(&b.energy)
        .then(a.pose.rotation.total_cmp(&b.pose.rotation))
        .then(a.pose.scale.total_cmp(&b.pose.scale))
        .then(a.pose.dx.total_cmp(&b.pose.dx))
        .then(a.pose.dy.total_cmp(&b.pose.dy))
}

fn coarse_poses(template: &Template, field: &PotentialField, rois: &RoiSet, grid: &PoseGrid, stride: f64) -> Vec<Pose> {
    let pivot = template.center();
    let nx = (field.width() as f64 / stride).ceil() as usize;
    let ny = (field.height() as f64 / stride).ceil() as usize;
    let mut poses = Vec::new();
    for &rotation in &grid.rotations {
        for &scale in &grid.scales {
            let (ew, eh) = template.posed_extent(scale, rotation);
            for j in 0..ny {
                for i in 0..nx {
                    let (cx, cy) = (i as f64 * stride, j as f64 * stride);
                    let (x0, y0) = (cx - ew / 2.0, cy - eh / 2.0);
                    let (x1, y1) = (cx + ew / 2.0, cy + eh / 2.0);
                    if rois.windows.iter().any(|w| w.intersects(x0, y0, x1, y1)) {
                        poses.push(Pose::centered_at(scale, rotation, Point::new(cx, cy), pivot));
                    }
                }
            }
        }
    }
    poses
}

/// Translation half-width, in strides, of the refinement neighbourhood: it
/// spans one full stride of the previous level.
fn refine_radius(grid: &PoseGrid, level: usize) -> i64 {
    if level == 0 {
        return 1;
    }
    let ratio = grid.stride(level - 1) / grid.stride(level);
    (ratio.ceil() as i64).max(1)
}

fn refine_poses(template: &Template, grid: &PoseGrid, seeds: &[MatchCandidate], level: usize) -> Vec<Pose> {
    let pivot = template.center();
    let stride = grid.stride(level);
    let radius = refine_radius(grid, level);
    let nr = grid.rotations.len() as i64;
    let ns = grid.scales.len() as i64;
    let mut seen = HashSet::new();
    let mut poses = Vec::new();
    for seed in seeds {
        let base = seed.pose;
        let ri = grid.nearest_rotation(base.rotation) as i64;
        let si = grid.nearest_scale(base.scale) as i64;
        let center = base.center(pivot);
        let rotations: Vec<f64> = match nr {
            1 => vec![base.rotation],
            _ => vec![
                grid.rotations[(ri - 1).rem_euclid(nr) as usize],
                base.rotation,
                grid.rotations[(ri + 1).rem_euclid(nr) as usize],
            ],
        };
        let mut scales = vec![base.scale];
        if si > 0 {
            scales.push(grid.scales[(si - 1) as usize]);
        }
        if si + 1 < ns {
            scales.push(grid.scales[(si + 1) as usize]);
        }
        for &rotation in &rotations {
            for &scale in &scales {
                for j in -radius..=radius {
                    for i in -radius..=radius {
                        let c = center + Point::new(i as f64 * stride, j as f64 * stride);
                        let pose = Pose::centered_at(scale, rotation, c, pivot);
                        if seen.insert(pose_key(&pose)) {
                            poses.push(pose);
                        }
                    }
                }
            }
        }
    }
    poses
}

/// Evaluates one pyramid level. Without seeds the grid is scanned at this
/// level's stride wherever the posed bbox meets an ROI window; with seeds a
/// neighbourhood of one grid step per pose dimension around each seed is
/// evaluated, the seed pose itself included. Survivors below `threshold`
/// are returned in ascending energy order, near-duplicates removed, at most
/// `keep_top` of them.
#[allow(clippy::too_many_arguments)]
pub fn search_level(
    template: &Template,
    field: &PotentialField,
    rois: &RoiSet,
    grid: &PoseGrid,
    seeds: Option<&[MatchCandidate]>,
    threshold: f64,
    keep_top: usize,
    level: usize,
) -> Result<LevelResult, MatchError> {
    if template.contour().is_empty() {
        return Err(MatchError::EmptyTemplate);
    }
    grid.validate()?;
    let poses = match seeds {
        Some(s) if !s.is_empty() => refine_poses(template, grid, s, level),
        _ => {
            if rois.windows.is_empty() {
                return Err(MatchError::NoSearchSpace);
            }
            coarse_poses(template, field, rois, grid, grid.stride(level))
        }
    };
    if poses.is_empty() {
        return Err(MatchError::NoSearchSpace);
    }

    let mut scored: Vec<MatchCandidate> = poses
        .par_iter()
        .map(|pose| MatchCandidate {
            pose: *pose,
            energy: contour_energy(&template.posed_contour(pose), field),
            level,
        })
        .collect();
    scored.sort_by(candidate_order);

    let evaluated = scored.len();
    let split = scored.partition_point(|c| c.energy < threshold);
    let best_rejected = scored.get(split).map(|c| c.energy);
    let separation = MIN_SEPARATION.max(grid.stride(level) / 2.0);
    let candidates = select_distinct(template, &scored[..split], keep_top, separation);
    Ok(LevelResult {
        level,
        candidates,
        evaluated,
        best_rejected,
    })
}

/// Edge map and potential field for every level of a schedule.
pub fn build_pyramid(
    base: &GrayImage,
    schedule: &PyramidSchedule,
) -> Result<Vec<(EdgeMap, PotentialField)>, MatchError> {
    build_pyramid_with(base, schedule, &CannyConfig::default())
}

pub fn build_pyramid_with(
    base: &GrayImage,
    schedule: &PyramidSchedule,
    canny: &CannyConfig,
) -> Result<Vec<(EdgeMap, PotentialField)>, MatchError> {
    schedule.validate()?;
    (0..schedule.levels())
        .into_par_iter()
        .map(|k| {
            let edges = detect_edges_with(base, schedule.sigmas[k], canny)?;
            let field = build_epf_scaled(&edges, schedule.unit(k))?;
            Ok((edges, field))
        })
        .collect()
}

/// Runs every level and returns all of them; the last entry holds the
/// final candidates.
pub fn run_stage2_on_fields(
    template: &Template,
    fields: &[&PotentialField],
    rois: &RoiSet,
    schedule: &PyramidSchedule,
    grid: &PoseGrid,
) -> Result<Vec<LevelResult>, MatchError> {
    schedule.validate()?;
    grid.validate()?;
    if fields.len() != schedule.levels() {
        return Err(MatchError::InvalidSchedule(format!(
            "{} fields for {} levels",
            fields.len(),
            schedule.levels()
        )));
    }
    let mut levels: Vec<LevelResult> = Vec::with_capacity(fields.len());
    for (k, field) in fields.iter().enumerate() {
        let seeds = levels.last().map(|l| l.candidates.as_slice());
        let result = search_level(
            template,
            field,
            rois,
            grid,
            seeds,
            schedule.energy_thresholds[k],
            schedule.keep_top[k],
            k,
        )?;
        if result.candidates.is_empty() {
            return Err(MatchError::NoCandidates {
                level: k,
                evaluated: result.evaluated,
                best_rejected: result.best_rejected,
            });
        }
        levels.push(result);
    }
    Ok(levels)
}

pub fn run_stage2(
    template: &Template,
    base: &GrayImage,
    rois: &RoiSet,
    schedule: &PyramidSchedule,
    grid: &PoseGrid,
) -> Result<Vec<MatchCandidate>, MatchError> {
    let pyramid = build_pyramid(base, schedule)?;
    let fields: Vec<&PotentialField> = pyramid.iter().map(|(_, f)| f).collect();
    let mut levels = run_stage2_on_fields(template, &fields, rois, schedule, grid)?;
    Ok(levels.pop().map(|l| l.candidates).unwrap_or_default())
}
