//! Prototype template: a closed contour with per-point tangents plus the
//! control points that drive its deformation.
//!
//! Text format (`#` starts a comment, tokens are whitespace separated):
//!
//! ```text
//! DEFTEMP 1
//! CONTOUR <n>
//! <x> <y> <tangent_radians>     (n lines)
//! CPS <m>
//! <x> <y> <label>               (m lines)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::geometry::{wrap_pi, Point};

use super::{Pose, RasterError};

pub const MIN_CONTOUR_POINTS: usize = 8;
pub const MIN_CONTROL_POINTS: usize = 3;

/// Slack for the control-point-inside-bbox check, in px.
const BBOX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub x: f64,
    pub y: f64,
    /// Undirected tangent in `[0, π)`.
    pub tangent: f64,
}

impl ContourPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

impl ControlPoint {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Contour and control points in a template-local frame whose origin is the
/// top-left of the tight contour bounds. The contour is treated as closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    contour: Vec<ContourPoint>,
    control_points: Vec<ControlPoint>,
    width: f64,
    height: f64,
}

impl Template {
    /// Validates and normalizes: tangents wrap into `[0, π)` and everything is
    /// shifted so the contour bounds start at the origin.
    pub fn new(
        contour: Vec<ContourPoint>,
        control_points: Vec<ControlPoint>,
    ) -> Result<Self, RasterError> {
        if contour.len() < MIN_CONTOUR_POINTS {
            return Err(RasterError::TooFewContourPoints(contour.len()));
        }
        if control_points.len() < MIN_CONTROL_POINTS {
            return Err(RasterError::TooFewControlPoints(control_points.len()));
        }
        let finite = contour
            .iter()
            .all(|c| c.x.is_finite() && c.y.is_finite() && c.tangent.is_finite())
            && control_points.iter().all(|c| c.point().is_finite());
        if !finite {
            return Err(RasterError::Parse {
                line: 0,
                message: "non-finite coordinate".into(),
            });
        }

        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &contour {
            min_x = min_x.min(c.x);
            min_y = min_y.min(c.y);
            max_x = max_x.max(c.x);
            max_y = max_y.max(c.y);
        }
        let contour: Vec<ContourPoint> = contour
            .into_iter()
            .map(|c| ContourPoint {
                x: c.x - min_x,
                y: c.y - min_y,
                tangent: wrap_pi(c.tangent),
            })
            .collect();
        let control_points: Vec<ControlPoint> = control_points
            .into_iter()
            .map(|c| ControlPoint {
                x: c.x - min_x,
                y: c.y - min_y,
                label: c.label,
            })
            .collect();
        let (width, height) = (max_x - min_x, max_y - min_y);
        for cp in &control_points {
            let inside = (-BBOX_SLACK..=width + BBOX_SLACK).contains(&cp.x)
                && (-BBOX_SLACK..=height + BBOX_SLACK).contains(&cp.y);
            if !inside {
                return Err(RasterError::ControlPointOutsideBbox(cp.label.clone()));
            }
        }
        Ok(Self {
            contour,
            control_points,
            width,
            height,
        })
    }

    pub fn contour(&self) -> &[ContourPoint] {
        &self.contour
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.control_points
    }

    /// `(width, height)` of the tight contour bounds.
    pub fn bbox(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    /// Rotation/scaling pivot.
    pub fn center(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contour_points(&self) -> Vec<Point> {
        self.contour.iter().map(ContourPoint::point).collect()
    }

    pub fn control_point_positions(&self) -> Vec<Point> {
        self.control_points.iter().map(ControlPoint::point).collect()
    }

    /// Contour points and tangents under `pose`, in the base frame.
    pub fn posed_contour(&self, pose: &Pose) -> Vec<ContourPoint> {
        let pivot = self.center();
        self.contour
            .iter()
            .map(|c| {
                let q = pose.apply(c.point(), pivot);
                ContourPoint {
                    x: q.x,
                    y: q.y,
                    tangent: pose.apply_tangent(c.tangent),
                }
            })
            .collect()
    }

    pub fn posed_control_points(&self, pose: &Pose) -> Vec<Point> {
        let pivot = self.center();
        self.control_points
            .iter()
            .map(|c| pose.apply(c.point(), pivot))
            .collect()
    }

    /// Axis-aligned size of the contour after scaling and rotation.
    pub fn posed_extent(&self, scale: f64, rotation: f64) -> (f64, f64) {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &self.contour {
            let q = c.point().rotated(rotation) * scale;
            x0 = x0.min(q.x);
            y0 = y0.min(q.y);
            x1 = x1.max(q.x);
            y1 = y1.max(q.y);
        }
        (x1 - x0, y1 - y0)
    }

    pub fn parse(text: &str) -> Result<Self, RasterError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let mut next = |what: &str| {
            lines.next().ok_or_else(|| RasterError::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let perr = |line: usize, message: String| RasterError::Parse { line, message };

        let (ln, header) = next("header")?;
        let mut tok = header.split_whitespace();
        if tok.next() != Some("DEFTEMP") || tok.next() != Some("1") || tok.next().is_some() {
            return Err(perr(ln, format!("expected `DEFTEMP 1`, found `{header}`")));
        }

        let count = |line: (usize, &str), keyword: &str| -> Result<usize, RasterError> {
            let mut tok = line.1.split_whitespace();
            match (tok.next(), tok.next().map(str::parse::<usize>), tok.next()) {
                (Some(k), Some(Ok(n)), None) if k == keyword => Ok(n),
                _ => Err(perr(line.0, format!("expected `{keyword} <count>`"))),
            }
        };
        let float = |line: usize, s: &str| -> Result<f64, RasterError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(line, format!("bad number `{s}`")))
        };

        let n = count(next("CONTOUR")?, "CONTOUR")?;
        let mut contour = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = next("contour point")?;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(perr(ln, "expected `x y tangent`".into()));
            }
            contour.push(ContourPoint {
                x: float(ln, t[0])?,
                y: float(ln, t[1])?,
                tangent: float(ln, t[2])?,
            });
        }

        let m = count(next("CPS")?, "CPS")?;
        let mut cps = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = next("control point")?;
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 3 {
                return Err(perr(ln, "expected `x y label`".into()));
            }
            cps.push(ControlPoint {
                x: float(ln, t[0])?,
                y: float(ln, t[1])?,
                label: t[2].to_string(),
            });
        }
        if let Some((ln, extra)) = lines.next() {
            return Err(perr(ln, format!("trailing content `{extra}`")));
        }
        Template::new(contour, cps)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("DEFTEMP 1\n");
        let _ = writeln!(out, "CONTOUR {}", self.contour.len());
        for c in &self.contour {
            let _ = writeln!(out, "{} {} {}", c.x, c.y, c.tangent);
        }
        let _ = writeln!(out, "CPS {}", self.control_points.len());
        for c in &self.control_points {
            let _ = writeln!(out, "{} {} {}", c.x, c.y, c.label);
        }
        out
    }
}

pub fn load_template(path: impl AsRef<Path>) -> Result<Template, RasterError> {
    Template::parse(&fs::read_to_string(path)?)
}

pub fn save_template(template: &Template, path: impl AsRef<Path>) -> Result<(), RasterError> {
    fs::write(path, template.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn square_text(n_contour: usize, tangent: &str) -> String {
        let mut s = String::from("DEFTEMP 1\n# a comment line\n");
        s += &format!("CONTOUR {n_contour}\n");
        for i in 0..n_contour {
            let a = i as f64 / n_contour as f64 * 2.0 * PI;
            s += &format!("{} {} {}\n", 10.0 + 10.0 * a.cos(), 10.0 + 10.0 * a.sin(), tangent);
        }
        s += "CPS 3\n10 0 top  # inline comment\n0 10 left\n20 10 right\n";
        s
    }

    #[test]
    fn too_few_contour_points() {
        assert!(matches!(
            Template::parse(&square_text(4, "0")),
            Err(RasterError::TooFewContourPoints(4))
        ));
    }

    #[test]
    fn tangent_is_reduced_mod_pi() {
        let t = Template::parse(&square_text(12, &format!("{}", 3.0 * PI / 2.0))).unwrap();
        for c in t.contour() {
            assert!((c.tangent - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn control_point_outside_bbox() {
        let text = square_text(12, "0").replace("20 10 right", "25 10 right");
        assert!(matches!(
            Template::parse(&text),
            Err(RasterError::ControlPointOutsideBbox(l)) if l == "right"
        ));
    }

    #[test]
    fn too_few_control_points_and_bad_header() {
        let text = square_text(12, "0").replace("CPS 3", "CPS 2").replace("20 10 right\n", "");
        assert!(matches!(
            Template::parse(&text),
            Err(RasterError::TooFewControlPoints(2))
        ));
        assert!(matches!(
            Template::parse("DEFTEMP 2\n"),
            Err(RasterError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn frame_is_shifted_to_bbox_origin() {
        let t = Template::parse(&square_text(12, "0")).unwrap();
        let (w, h) = t.bbox();
        assert!((w - 20.0).abs() < 1e-9 && (h - 20.0).abs() < 1e-9);
        let min_x = t.contour().iter().map(|c| c.x).fold(f64::INFINITY, f64::min);
        assert!(min_x.abs() < 1e-12);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let t = Template::parse(&square_text(16, "0.3")).unwrap();
        assert_eq!(Template::parse(&t.to_text()).unwrap(), t);
    }
}
