//! Reports, CSVs, overlays and the file-writing entry points.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::edge::PotentialField;
use crate::geometry::Point;
use crate::lwm::{apply_warp, fit_template_warp};
use crate::raster::{encode_pgm, encode_png, load_image, load_template, ContourPoint, GrayImage, Grid, Template};

use super::config::{Dumps, Mode, PipelineConfig};
use super::{segment_with_artifacts, track_with_artifacts, Artifacts, FrameResult, PipelineError, SegmentationResult};

const CROSS_ARM: i64 = 2;
const WARP_GRID_STEP: f64 = 4.0;

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Line-oriented `key=value` report. Wall-clock timings are left out so
/// reports from identical runs compare equal byte for byte.
pub fn format_report(result: &SegmentationResult) -> String {
    let mut s = String::new();
    let p = &result.pose;
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
    let _ = writeln!(s, "status=ok");
    let _ = writeln!(s, "image_width={}", result.width);
    let _ = writeln!(s, "image_height={}", result.height);
    let _ = writeln!(s, "pose_scale={}", p.scale);
    let _ = writeln!(s, "pose_theta={}", p.rotation);
    let _ = writeln!(s, "pose_dx={}", p.dx);
    let _ = writeln!(s, "pose_dy={}", p.dy);
    let _ = writeln!(s, "stage2_energy={}", opt(result.stage2_energy));
    let _ = writeln!(s, "stage2_best_energy={}", opt(result.stage2_best));
    let _ = writeln!(s, "final_energy={}", result.final_energy);
    let _ = writeln!(s, "final_penalty={}", result.final_penalty);
    let _ = writeln!(s, "final_cost={}", result.final_cost);
    let _ = writeln!(s, "stage1_runs={}", result.stage1_runs);
    for (i, n) in result.edge_counts.iter().enumerate() {
        let _ = writeln!(s, "edges_level{i}={n}");
    }
    match &result.roi {
        Some(roi) => {
            let _ = writeln!(s, "roi_windows={}", roi.windows.len());
            let _ = writeln!(s, "roi_coverage={}", roi.coverage_fraction);
        }
        None => {
            let _ = writeln!(s, "roi_windows=none");
        }
    }
    for l in &result.levels {
        let _ = writeln!(s, "stage2_level{}_evaluated={}", l.level, l.evaluated);
        let _ = writeln!(s, "stage2_level{}_candidates={}", l.level, l.candidates.len());
    }
    let _ = writeln!(s, "stage3_runs={}", result.refinements);
    let _ = writeln!(s, "stage3_iterations={}", result.trace.len().saturating_sub(1));
    for (i, c) in result.control_points.iter().enumerate() {
        let _ = writeln!(s, "cp{i}={},{}", c.x, c.y);
    }
    let _ = writeln!(s, "contour_points={}", result.contour.len());
    s
}

/// Report for a run that ended without a match.
pub fn format_failure(err: &PipelineError) -> String {
    let mut s = String::new();
    match err {
        PipelineError::NoCandidates(d) => {
            let _ = writeln!(s, "status=no_candidates");
            let _ = writeln!(s, "edge_count={}", d.edge_count);
            let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
            let _ = writeln!(s, "roi_coverage={}", opt(d.roi_coverage));
            let _ = writeln!(s, "empty_level={}", d.level.map_or_else(|| "none".to_string(), |l| l.to_string()));
            let _ = writeln!(s, "best_rejected_energy={}", opt(d.best_rejected));
        }
        PipelineError::Config(m) => {
            let _ = writeln!(s, "status=config_error");
            let _ = writeln!(s, "message={m}");
        }
        PipelineError::Io(m) => {
            let _ = writeln!(s, "status=io_error");
            let _ = writeln!(s, "message={m}");
        }
    }
    s
}

pub fn format_timings(result: &SegmentationResult) -> String {
    let t = &result.timings;
    format!(
        "edges_ms={:.3}\nstage1_ms={:.3}\nstage2_ms={:.3}\nstage3_ms={:.3}\ntotal_ms={:.3}\n",
        t.edges_ms, t.stage1_ms, t.stage2_ms, t.stage3_ms, t.total_ms
    )
}

/// Candidate CSV. Only the finest level unless `all_levels`.
pub fn format_candidates(result: &SegmentationResult, all_levels: bool) -> String {
    let mut s = String::from("level,s,theta,dx,dy,energy\n");
    let finest = result.levels.len().saturating_sub(1);
    for l in &result.levels {
        if !all_levels && l.level != finest {
            continue;
        }
        for c in &l.candidates {
            let p = &c.pose;
            let _ = writeln!(s, "{},{},{},{},{},{}", c.level, p.scale, p.rotation, p.dx, p.dy, c.energy);
        }
    }
    s
}

pub fn format_trace(trace: &[f64]) -> String {
    let mut s = String::from("iteration,gbest\n");
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    s
}

/// Source grid over the posed template bounds mapped through the final warp.
/// `covered` is 0 where no support disk reaches the grid point and the
/// nearest local fit was extrapolated.
pub fn format_warp(template: &Template, result: &SegmentationResult, lwm: &crate::lwm::LwmConfig) -> String {
    let mut s = String::from("x,y,X,Y,covered\n");
    let Ok(model) = fit_template_warp(template, &result.control_points, &result.pose, lwm) else {
        return s;
    };
    let posed = template.posed_contour(&result.pose);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &posed {
        x0 = x0.min(c.x);
        y0 = y0.min(c.y);
        x1 = x1.max(c.x);
        y1 = y1.max(c.y);
    }
    let nx = ((x1 - x0) / WARP_GRID_STEP).floor() as usize;
    let ny = ((y1 - y0) / WARP_GRID_STEP).floor() as usize;
    for j in 0..=ny {
        for i in 0..=nx {
            let p = Point::new(x0 + i as f64 * WARP_GRID_STEP, y0 + j as f64 * WARP_GRID_STEP);
            let q = apply_warp(&model, p);
            let _ = writeln!(s, "{},{},{},{},{}", p.x, p.y, q.point.x, q.point.y, u8::from(!q.fallback));
        }
    }
    s
}

/// Pixels of the closed polyline through `contour`, sampled at most half a
/// pixel apart and rounded. Pixels outside the image are dropped.
pub fn contour_pixels(contour: &[ContourPoint], width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let n = contour.len();
    let mut push = |x: f64, y: f64| {
        let (xi, yi) = (x.round(), y.round());
        if xi >= 0.0 && yi >= 0.0 && (xi as usize) < width && (yi as usize) < height {
            out.push((xi as usize, yi as usize));
        }
    };
    if n == 1 {
        push(contour[0].x, contour[0].y);
    }
    if n < 2 {
        return out;
    }
    for i in 0..n {
        let a = contour[i].point();
        let b = contour[(i + 1) % n].point();
        let steps = (a.distance(b) / 0.5).ceil().max(1.0) as usize;
        for k in 0..steps {
            let t = k as f64 / steps as f64;
            push(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Burns the contour and a small cross per control point into a copy of
/// `base` at full intensity.
pub fn overlay_image(base: &GrayImage, contour: &[ContourPoint], control_points: &[Point]) -> GrayImage {
    let mut img = base.clone();
    for (x, y) in contour_pixels(contour, base.width(), base.height()) {
        img.put(x as i64, y as i64, 1.0);
    }
    for c in control_points {
        let (cx, cy) = (c.x.round() as i64, c.y.round() as i64);
        for d in -CROSS_ARM..=CROSS_ARM {
            img.put(cx + d, cy, 1.0);
            img.put(cx, cy + d, 1.0);
        }
    }
    img
}

pub fn render_overlay(base: &GrayImage, result: &SegmentationResult, path: &Path) -> Result<(), PipelineError> {
    let img = overlay_image(base, &result.contour, &result.control_points);
    let bytes = encode_png(&img).map_err(|e| io_err(path, e))?;
    write_file(path, &bytes)
}

fn normalized(grid: &Grid<f64>) -> GrayImage {
    let (lo, hi) = grid
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(grid.width(), grid.height(), |x, y| (grid.at(x, y) - lo) / span)
        .expect("grid has nonzero size")
}

fn field_grid(field: &PotentialField) -> Grid<f64> {
    Grid::from_vec(field.width(), field.height(), field.phi_values().to_vec())
}

/// Writes every output of one segmentation into `dir`.
fn write_outputs(
    dir: &Path,
    base: &GrayImage,
    template: &Template,
    result: &SegmentationResult,
    artifacts: &Artifacts,
    dumps: &Dumps,
    lwm: &crate::lwm::LwmConfig,
) -> Result<(), PipelineError> {
    render_overlay(base, result, &dir.join("overlay.png"))?;
    write_file(&dir.join("report.txt"), format_report(result).as_bytes())?;
    write_file(&dir.join("candidates.csv"), format_candidates(result, dumps.candidates).as_bytes())?;
    write_file(&dir.join("timings.txt"), format_timings(result).as_bytes())?;
    if dumps.epf {
        write_file(&dir.join("epf.pgm"), &encode_pgm(&normalized(&field_grid(&artifacts.field))))?;
    }
    if dumps.roi {
        if let Some(r) = &artifacts.roi_response {
            write_file(&dir.join("roi.pgm"), &encode_pgm(&normalized(r)))?;
        }
    }
    if dumps.trace {
        write_file(&dir.join("trace.csv"), format_trace(&result.trace).as_bytes())?;
    }
    if dumps.warp {
        write_file(&dir.join("warp.csv"), format_warp(template, result, lwm).as_bytes())?;
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Single-image run. Outputs go to `cfg.out_dir`; a failed search still
/// writes `report.txt` with its diagnostics.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<SegmentationResult, PipelineError> {
    cfg.validate()?;
    if cfg.mode != Mode::Single {
        return Err(PipelineError::Config("run_pipeline needs single mode".into()));
    }
    let base = load_image(&cfg.images[0])?;
    let template = load_template(&cfg.template)?;
    ensure_dir(&cfg.out_dir)?;
    match segment_with_artifacts(&base, &template, &cfg.settings) {
        Ok((result, artifacts)) => {
            write_outputs(&cfg.out_dir, &base, &template, &result, &artifacts, &cfg.dumps, &cfg.settings.swarm.lwm)?;
            Ok(result)
        }
        Err(e) => {
            write_file(&cfg.out_dir.join("report.txt"), format_failure(&e).as_bytes())?;
            Err(e)
        }
    }
}

fn track_line(f: &FrameResult) -> String {
    let status = match &f.outcome {
        Ok(_) => "ok",
        Err(PipelineError::NoCandidates(_)) => "no_candidates",
        Err(PipelineError::Config(_)) => "config_error",
        Err(PipelineError::Io(_)) => "io_error",
    };
    let mut s = format!(
        "frame={} status={status} seeded={} relocalized={} stage1_runs={}",
        f.index, f.seeded, f.relocalized, f.stage1_runs
    );
    if let Some(c) = f.seeded_cost {
        let _ = write!(s, " seeded_cost={c}");
    }
    if let Ok(r) = &f.outcome {
        let _ = write!(s, " final_cost={}", r.final_cost);
    }
    s.push('\n');
    s
}

/// Sequence run. Each frame gets `frame_NNN/` under `cfg.out_dir`, with a
/// `track.txt` summary and `timings.txt` per-frame wall times at the top.
pub fn run_track(cfg: &PipelineConfig) -> Result<Vec<FrameResult>, PipelineError> {
    cfg.validate()?;
    if cfg.mode != Mode::Track {
        return Err(PipelineError::Config("run_track needs track mode".into()));
    }
    let template = load_template(&cfg.template)?;
    let frames = cfg.images.iter().map(load_image).collect::<Result<Vec<_>, _>>()?;
    ensure_dir(&cfg.out_dir)?;
    let results = track_with_artifacts(&frames, &template, &cfg.settings);
    let mut summary = String::new();
    let mut timings = String::new();
    for (f, artifacts) in &results {
        let dir = cfg.out_dir.join(format!("frame_{:03}", f.index));
        ensure_dir(&dir)?;
        match (&f.outcome, artifacts) {
            (Ok(r), Some(a)) => write_outputs(
                &dir,
                &frames[f.index],
                &template,
                r,
                a,
                &cfg.dumps,
                &cfg.settings.swarm.lwm,
            )?,
            (Err(e), _) => write_file(&dir.join("report.txt"), format_failure(e).as_bytes())?,
            (Ok(_), None) => unreachable!("successful frames carry artifacts"),
        }
        summary.push_str(&track_line(f));
        let _ = writeln!(timings, "frame={} total_ms={:.3}", f.index, f.total_ms);
    }
    write_file(&cfg.out_dir.join("track.txt"), summary.as_bytes())?;
    write_file(&cfg.out_dir.join("timings.txt"), timings.as_bytes())?;
    Ok(results.into_iter().map(|(f, _)| f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(x: f64, y: f64) -> ContourPoint {
        ContourPoint { x, y, tangent: 0.0 }
    }

    #[test]
    fn empty_contour_leaves_image_unchanged() {
        let base = GrayImage::from_fn(16, 12, |x, y| ((x + y) % 5) as f64 / 5.0).unwrap();
        assert_eq!(overlay_image(&base, &[], &[]), base);
    }

    #[test]
    fn partially_outside_contour_is_clipped() {
        let base = GrayImage::constant(20, 20, 0.0).unwrap();
        let contour = [cp(-10.0, 5.0), cp(10.0, 5.0), cp(10.0, 30.0)];
        let img = overlay_image(&base, &contour, &[Point::new(19.0, 19.0)]);
        assert_eq!(img.get(0, 5), 1.0);
        assert_eq!(img.get(10, 19), 1.0);
        assert_eq!(img.get(19, 17), 1.0);
    }

    #[test]
    fn contour_pixels_are_gap_free() {
        let contour = [cp(2.0, 2.0), cp(12.0, 2.0), cp(12.0, 9.0)];
        let px = contour_pixels(&contour, 20, 20);
        for x in 2..=12 {
            assert!(px.contains(&(x, 2)), "missing ({x},2)");
        }
        for y in 2..=9 {
            assert!(px.contains(&(12, y)));
        }
    }

    #[test]
    fn trace_csv_layout() {
        assert_eq!(format_trace(&[0.5, 0.25]), "iteration,gbest\n0,0.5\n1,0.25\n");
    }
}
