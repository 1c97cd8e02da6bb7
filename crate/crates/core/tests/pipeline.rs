mod common;

use std::path::Path;
use std::sync::{Mutex, MutexGuard, OnceLock};

use common::{contour_error, moving_sequence};
use deftemp::geometry::point_polyline_distance;
use deftemp::pipeline::{
    contour_pixels, overlay_image, run_pipeline, segment, track, Dumps, Mode, PipelineConfig, PipelineError,
    SegmentationResult, Settings,
};
use deftemp::raster::{make_fixture, save_image, save_template, Fixture, FixtureSpec, GrayImage, ShapeKind};
use deftemp::Point;

/// Full runs take turns so wall-clock comparisons are not skewed by
/// neighbouring tests.
fn exclusive() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn ellipse() -> &'static (Fixture, SegmentationResult) {
    static CELL: OnceLock<(Fixture, SegmentationResult)> = OnceLock::new();
    CELL.get_or_init(|| {
        let _turn = exclusive();
        let mut spec = FixtureSpec::new(ShapeKind::Ellipse, 256);
        spec.pose = spec.centered_pose(1.0, 0.52, Point::new(150.0, 140.0));
        spec.noise = 0.03;
        let f = make_fixture(&spec).unwrap();
        let r = segment(&f.image, &f.template, &Settings::default()).unwrap();
        (f, r)
    })
}

#[test]
fn ellipse_contour_lands_on_the_boundary() {
    let (f, r) = ellipse();
    let err = contour_error(r, f);
    assert!(err < 2.0, "mean boundary error {err}");
}

#[test]
fn refinement_never_loses_to_stage_two() {
    let (_, r) = ellipse();
    assert!(r.final_cost <= r.stage2_best.unwrap() + 1e-12);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn stage_timings_add_up() {
    let (_, r) = ellipse();
    let t = &r.timings;
    let sum = t.edges_ms + t.stage1_ms + t.stage2_ms + t.stage3_ms;
    assert!(sum >= 0.0 && t.total_ms > 0.0);
    assert!((sum - t.total_ms).abs() <= 0.05 * t.total_ms, "{t:?}");
}

#[test]
fn drawn_contour_stays_near_the_truth() {
    let (f, r) = ellipse();
    let pixels = contour_pixels(&r.contour, r.width, r.height);
    assert!(!pixels.is_empty());
    for (x, y) in pixels {
        let d = point_polyline_distance(Point::new(x as f64, y as f64), &f.truth_boundary, true);
        assert!(d <= 2.0, "pixel ({x}, {y}) is {d} px off");
    }
    let img = overlay_image(&f.image, &r.contour, &r.control_points);
    assert_eq!((img.width(), img.height()), (256, 256));
}

#[test]
fn blank_image_has_no_candidates() {
    let blank = GrayImage::constant(128, 128, 0.4).unwrap();
    let tmpl = make_fixture(&FixtureSpec::new(ShapeKind::Ellipse, 128)).unwrap().template;
    match segment(&blank, &tmpl, &Settings::default()) {
        Err(PipelineError::NoCandidates(d)) => assert_eq!(d.edge_count, 0),
        other => panic!("expected NoCandidates, got {other:?}"),
    }
}

fn write_inputs(dir: &Path, f: &Fixture) -> PipelineConfig {
    save_image(&f.image, dir.join("image.pgm")).unwrap();
    save_template(&f.template, dir.join("template.txt")).unwrap();
    PipelineConfig {
        mode: Mode::Single,
        images: vec![dir.join("image.pgm")],
        template: dir.join("template.txt"),
        out_dir: dir.join("out"),
        settings: Settings { swarm: deftemp::swarm::SwarmConfig { iterations: 40, ..Default::default() }, ..Settings::default() },
        dumps: Dumps { candidates: true, trace: true, ..Dumps::default() },
    }
}

#[test]
fn repeated_runs_write_identical_reports() {
    let _turn = exclusive();
    let mut spec = FixtureSpec::new(ShapeKind::Rectangle, 256);
    spec.noise = 0.03;
    spec.pose = spec.centered_pose(0.9, 0.26, Point::new(110.0, 140.0));
    let f = make_fixture(&spec).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&write_inputs(a.path(), &f)).unwrap();
    run_pipeline(&write_inputs(b.path(), &f)).unwrap();
    for name in ["report.txt", "candidates.csv", "trace.csv"] {
        let x = std::fs::read(a.path().join("out").join(name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    assert!(a.path().join("out/overlay.png").is_file());
}

#[test]
fn tracking_follows_a_moving_shape() {
    let _turn = exclusive();
    let seq = moving_sequence(5);
    let frames: Vec<GrayImage> = seq.iter().map(|f| f.image.clone()).collect();
    let out = track(&frames, &seq[0].template, &Settings::default());
    assert_eq!(out.len(), 5);
    for (fr, truth) in out.iter().zip(&seq) {
        let r = fr.outcome.as_ref().unwrap();
        let err = contour_error(r, truth);
        assert!(err < 2.0, "frame {}: error {err}", fr.index);
        if fr.index > 0 {
            assert!(fr.seeded && !fr.relocalized);
            assert_eq!(fr.stage1_runs, 0);
            assert!(fr.total_ms < out[0].total_ms, "frame {} not faster", fr.index);
        }
    }
}

#[test]
fn tracking_a_still_shape_stays_put() {
    let _turn = exclusive();
    let seq = moving_sequence(1);
    let frames = vec![seq[0].image.clone(); 3];
    let out = track(&frames, &seq[0].template, &Settings::default());
    let first = out[0].outcome.as_ref().unwrap();
    for fr in &out[1..] {
        let r = fr.outcome.as_ref().unwrap();
        for (a, b) in r.contour.iter().zip(&first.contour) {
            assert!(a.point().distance(b.point()) <= 0.5, "frame {}", fr.index);
        }
    }
}

#[test]
fn tracking_relocalizes_when_the_shape_vanishes() {
    let _turn = exclusive();
    let seq = moving_sequence(4);
    let blank = GrayImage::constant(256, 256, 0.2).unwrap();
    let frames = vec![seq[0].image.clone(), blank, seq[2].image.clone()];
    let out = track(&frames, &seq[0].template, &Settings::default());
    assert!(out[1].relocalized);
    assert!(matches!(out[1].outcome, Err(PipelineError::NoCandidates(_))));
    let r = out[2].outcome.as_ref().unwrap();
    assert!(contour_error(r, &seq[2]) < 2.0);
}
