//! End-to-end orchestration: Stage 1 windows, Stage 2 pyramid search and
//! Stage 3 swarm refinement, plus frame-to-frame tracking.

pub mod config;
mod output;

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::edge::{build_epf, detect_edges_with, EdgeError, PotentialField};
use crate::geometry::Point;
use crate::lwm::warp_template_with;
use crate::matching::{build_pyramid_with, contour_energy, run_stage2_on_fields, LevelResult, MatchError};
use crate::raster::{ContourPoint, GrayImage, Grid, Pose, RasterError, Template};
use crate::roi::{find_rois_with_response, RoiError, RoiSet};
use crate::swarm::{mean_offset, optimize_anchored, optimize_from, Anchor, Refinement, SwarmError};

pub use config::{Dumps, Mode, PipelineConfig, Settings};
pub use output::{
    contour_pixels, format_candidates, format_failure, format_report, format_timings, format_trace, format_warp,
    overlay_image, render_overlay, run_pipeline, run_track,
};

/// Per-stage context attached to a failed search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Edge pixels at the coarsest level (the Stage 1 input).
    pub edge_count: usize,
    pub roi_coverage: Option<f64>,
    /// Pyramid level at which the candidate list ran dry.
    pub level: Option<usize>,
    pub best_rejected: Option<f64>,
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "edge count {}", self.edge_count)?;
        if let Some(c) = self.roi_coverage {
            write!(f, ", ROI coverage {c:.4}")?;
        }
        if let Some(l) = self.level {
            write!(f, ", empty at level {l}")?;
        }
        if let Some(e) = self.best_rejected {
            write!(f, ", best rejected energy {e:.4}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no candidates ({0})")]
    NoCandidates(Diagnostics),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::NoCandidates(_) => 2,
            PipelineError::Config(_) => 3,
            PipelineError::Io(_) => 4,
        }
    }
}

impl From<RasterError> for PipelineError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Io(_)
            | RasterError::UnsupportedFormat(_)
            | RasterError::CorruptFile(_)
            | RasterError::ZeroDimension => PipelineError::Io(e.to_string()),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<SwarmError> for PipelineError {
    fn from(e: SwarmError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

/// Wall-clock time per stage in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub edges_ms: f64,
    pub stage1_ms: f64,
    pub stage2_ms: f64,
    pub stage3_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
    /// Final control points, base frame.
    pub control_points: Vec<Point>,
    /// Final deformed contour, base frame, closed.
    pub contour: Vec<ContourPoint>,
    /// Stage 2 energy of the pose that won Stage 3; `None` when Stage 2 did not run.
    pub stage2_energy: Option<f64>,
    /// Lowest Stage 2 energy over the final candidates.
    pub stage2_best: Option<f64>,
    pub final_energy: f64,
    pub final_penalty: f64,
    pub final_cost: f64,
    /// Global-best cost trace of the winning swarm run.
    pub trace: Vec<f64>,
    pub levels: Vec<LevelResult>,
    /// Edge pixels per level that was built (coarsest first).
    pub edge_counts: Vec<usize>,
    pub roi: Option<RoiSet>,
    /// Number of swarm runs.
    pub refinements: usize,
    /// Stage 1 invocations (0 or 1).
    pub stage1_runs: usize,
    pub timings: StageTimings,
}

/// Intermediate rasters for the optional dumps.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub field: PotentialField,
    pub roi_response: Option<Grid<f64>>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn no_candidates(diag: Diagnostics) -> PipelineError {
    PipelineError::NoCandidates(diag)
}

fn match_error(e: MatchError, diag: Diagnostics) -> PipelineError {
    match e {
        MatchError::NoCandidates { level, best_rejected, .. } => no_candidates(Diagnostics {
            level: Some(level),
            best_rejected,
            ..diag
        }),
        MatchError::Edge(EdgeError::NoEdges) | MatchError::NoSearchSpace => no_candidates(diag),
        MatchError::Edge(e @ EdgeError::SigmaTooSmall(_)) => PipelineError::Config(e.to_string()),
        MatchError::InvalidGrid(_) | MatchError::InvalidSchedule(_) | MatchError::EmptyTemplate => {
            PipelineError::Config(e.to_string())
        }
    }
}

/// Final contour for a refinement; falls back to the rigid outline when the
/// warp cannot be fitted.
fn final_contour(template: &Template, r: &Refinement, settings: &Settings) -> Vec<ContourPoint> {
    warp_template_with(template, &r.control_points, &r.pose, &settings.swarm.lwm)
        .unwrap_or_else(|_| template.posed_contour(&r.pose))
}

/// Full three-stage segmentation of one image.
pub fn segment(image: &GrayImage, template: &Template, settings: &Settings) -> Result<SegmentationResult, PipelineError> {
    segment_with_artifacts(image, template, settings).map(|(r, _)| r)
}

pub fn segment_with_artifacts(
    image: &GrayImage,
    template: &Template,
    settings: &Settings,
) -> Result<(SegmentationResult, Artifacts), PipelineError> {
    settings.validate()?;
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let grid = settings.pose_grid(template);
    let schedule = &settings.schedule;
    let finest = schedule.levels() - 1;

    let t = Instant::now();
    let pyramid = build_pyramid_with(image, schedule, &settings.edges);
    timings.edges_ms = ms(t);
    let pyramid = match pyramid {
        Ok(p) => p,
        Err(e) => {
            // count edges at the coarsest level for the report
            let edge_count = detect_edges_with(image, schedule.sigmas[0], &settings.edges)
                .map(|m| m.count())
                .unwrap_or(0);
            return Err(match_error(e, Diagnostics { edge_count, ..Diagnostics::default() }));
        }
    };
    let edge_counts: Vec<usize> = pyramid.iter().map(|(e, _)| e.count()).collect();
    let mut diag = Diagnostics {
        edge_count: edge_counts[0],
        ..Diagnostics::default()
    };
    let fields: Vec<&PotentialField> = pyramid.iter().map(|(_, f)| f).collect();
    let field = fields[finest];

    let mut roi = None;
    let mut roi_response = None;
    let mut stage1_runs = 0;
    let mut levels = Vec::new();
    let seeds: Vec<(Pose, f64)> = if settings.skip_roi {
        let center = Point::new(image.width() as f64 / 2.0, image.height() as f64 / 2.0);
        let pose = Pose::centered_at(1.0, 0.0, center, template.center());
        vec![(pose, contour_energy(&template.posed_contour(&pose), field))]
    } else {
        let t = Instant::now();
        let orientations: Vec<f64> = grid.rotations.iter().step_by(settings.roi_orientation_subsample).copied().collect();
        let found = find_rois_with_response(template, &pyramid[0].0, &orientations, &grid.scales, &settings.roi);
        stage1_runs = 1;
        timings.stage1_ms = ms(t);
        let (set, response) = match found {
            Ok(x) => x,
            Err(RoiError::NoEdges) => return Err(no_candidates(diag)),
            Err(e) => return Err(PipelineError::Config(e.to_string())),
        };
        diag.roi_coverage = Some(set.coverage_fraction);

        let t = Instant::now();
        let result = run_stage2_on_fields(template, &fields, &set, schedule, &grid);
        timings.stage2_ms = ms(t);
        levels = result.map_err(|e| match_error(e, diag.clone()))?;
        roi = Some(set);
        roi_response = Some(response);
        levels
            .last()
            .map(|l| l.candidates.iter().map(|c| (c.pose, c.energy)).collect())
            .unwrap_or_default()
    };
    if seeds.is_empty() {
        return Err(no_candidates(diag));
    }

    let t = Instant::now();
    let mut best: Option<(Refinement, f64)> = None;
    for (pose, e) in &seeds {
        let start_cps = template.posed_control_points(pose);
        let r = optimize_from(template, pose, &start_cps, field, &settings.swarm)?;
        if best.as_ref().is_none_or(|(b, _)| r.cost < b.cost) {
            best = Some((r, *e));
        }
    }
    timings.stage3_ms = ms(t);
    let (winner, stage2_energy) = best.expect("at least one seed");
    let contour = final_contour(template, &winner, settings);
    timings.total_ms = ms(start);

    let from_stage2 = !settings.skip_roi;
    let result = SegmentationResult {
        width: image.width(),
        height: image.height(),
        pose: winner.pose,
        control_points: winner.control_points.clone(),
        contour,
        stage2_energy: from_stage2.then_some(stage2_energy),
        stage2_best: from_stage2.then(|| seeds.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)),
        final_energy: winner.breakdown.energy,
        final_penalty: winner.breakdown.penalty,
        final_cost: winner.cost,
        trace: winner.trace.clone(),
        levels,
        edge_counts,
        roi,
        refinements: seeds.len(),
        stage1_runs,
        timings,
    };
    let artifacts = Artifacts {
        field: pyramid[finest].1.clone(),
        roi_response,
    };
    Ok((result, artifacts))
}

/// Stage 3 alone on the finest field, starting from a previous frame's
/// answer. The swarm is centered on the previous control points and the
/// rigidity penalty ignores rigid translation, which the pose absorbs.
pub fn follow(
    image: &GrayImage,
    template: &Template,
    previous: &SegmentationResult,
    settings: &Settings,
) -> Result<(SegmentationResult, Artifacts), PipelineError> {
    settings.validate()?;
    let start = Instant::now();
    let mut timings = StageTimings::default();
    let sigma = *settings.schedule.sigmas.last().expect("validated schedule");

    let t = Instant::now();
    let edges = detect_edges_with(image, sigma, &settings.edges).map_err(|e| PipelineError::Config(e.to_string()))?;
    let field = build_epf(&edges).map_err(|_| {
        no_candidates(Diagnostics {
            edge_count: 0,
            ..Diagnostics::default()
        })
    })?;
    timings.edges_ms = ms(t);

    let t = Instant::now();
    let posed = template.posed_control_points(&previous.pose);
    let mut r = optimize_anchored(
        template,
        &previous.pose,
        &previous.control_points,
        Anchor::Floating(&posed),
        &field,
        &settings.swarm,
    )?;
    timings.stage3_ms = ms(t);
    // the warp commutes with translation, so the pose can take up the mean
    // control-point offset without changing the contour
    let shift = mean_offset(&posed, &r.control_points);
    let p = previous.pose;
    r.pose = Pose::new(p.scale, p.rotation, p.dx + shift.x, p.dy + shift.y);
    let contour = final_contour(template, &r, settings);
    timings.total_ms = ms(start);

    let result = SegmentationResult {
        width: image.width(),
        height: image.height(),
        pose: r.pose,
        control_points: r.control_points.clone(),
        contour,
        stage2_energy: None,
        stage2_best: None,
        final_energy: r.breakdown.energy,
        final_penalty: r.breakdown.penalty,
        final_cost: r.cost,
        trace: r.trace.clone(),
        levels: Vec::new(),
        edge_counts: vec![edges.count()],
        roi: None,
        refinements: 1,
        stage1_runs: 0,
        timings,
    };
    Ok((result, Artifacts { field, roi_response: None }))
}

/// Outcome for one frame of a tracked sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub index: usize,
    pub outcome: Result<SegmentationResult, PipelineError>,
    /// The frame was seeded from the previous one.
    pub seeded: bool,
    /// A seeded attempt was rejected and the full search ran instead.
    pub relocalized: bool,
    /// Seeded cost that triggered relocalization, if any.
    pub seeded_cost: Option<f64>,
    pub stage1_runs: usize,
    pub total_ms: f64,
}

/// Tracks the template through `frames`. Frame 0, and any frame without a
/// usable predecessor, runs the full search; others start from the previous
/// answer and fall back to the full search when the result costs more than
/// `settings.relocalize_above` or fails.
pub fn track(frames: &[GrayImage], template: &Template, settings: &Settings) -> Vec<FrameResult> {
    track_with_artifacts(frames, template, settings)
        .into_iter()
        .map(|(f, _)| f)
        .collect()
}

pub fn track_with_artifacts(
    frames: &[GrayImage],
    template: &Template,
    settings: &Settings,
) -> Vec<(FrameResult, Option<Artifacts>)> {
    let mut out: Vec<(FrameResult, Option<Artifacts>)> = Vec::with_capacity(frames.len());
    for (index, image) in frames.iter().enumerate() {
        let start = Instant::now();
        let previous = out
            .last()
            .and_then(|(f, _)| f.outcome.as_ref().ok());
        let mut seeded = false;
        let mut seeded_cost = None;
        let mut attempt = None;
        if let Some(prev) = previous {
            seeded = true;
            match follow(image, template, prev, settings) {
                Ok((r, a)) if r.final_cost <= settings.relocalize_above => attempt = Some(Ok((r, a))),
                Ok((r, _)) => seeded_cost = Some(r.final_cost),
                Err(e @ PipelineError::Config(_)) => attempt = Some(Err(e)),
                Err(_) => {}
            }
        }
        let relocalized = seeded && attempt.is_none();
        let result = attempt.unwrap_or_else(|| segment_with_artifacts(image, template, settings));
        let stage1_runs = match &result {
            Ok((r, _)) => r.stage1_runs,
            Err(_) if !settings.skip_roi && (relocalized || !seeded) => 1,
            Err(_) => 0,
        };
        let (outcome, artifacts) = match result {
            Ok((r, a)) => (Ok(r), Some(a)),
            Err(e) => (Err(e), None),
        };
        out.push((
            FrameResult {
                index,
                outcome,
                seeded,
                relocalized,
                seeded_cost,
                stage1_runs,
                total_ms: ms(start),
            },
            artifacts,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{make_fixture, FixtureSpec, ShapeKind};

    #[test]
    fn blank_image_reports_zero_edges() {
        let t = make_fixture(&FixtureSpec::new(ShapeKind::Ellipse, 128)).unwrap().template;
        let blank = GrayImage::constant(128, 128, 0.2).unwrap();
        match segment(&blank, &t, &Settings::default()) {
            Err(PipelineError::NoCandidates(d)) => assert_eq!(d.edge_count, 0),
            other => panic!("expected NoCandidates, got {other:?}"),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::NoCandidates(Diagnostics::default()).exit_code(), 2);
        assert_eq!(PipelineError::Config(String::new()).exit_code(), 3);
        assert_eq!(PipelineError::Io(String::new()).exit_code(), 4);
        let io: PipelineError = RasterError::CorruptFile("x".into()).into();
        assert_eq!(io.exit_code(), 4);
        let parse: PipelineError = RasterError::TooFewContourPoints(2).into();
        assert_eq!(parse.exit_code(), 3);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        let t = make_fixture(&FixtureSpec::new(ShapeKind::Ellipse, 128)).unwrap().template;
        let img = GrayImage::constant(128, 128, 0.2).unwrap();
        let mut s = Settings::default();
        s.schedule.sigmas = vec![1.0, 2.0, 4.0];
        assert!(matches!(segment(&img, &t, &s), Err(PipelineError::Config(_))));
    }
}
