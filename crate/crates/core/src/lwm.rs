//! Local weighted mean warp.
//!
//! Every control point gets a low-degree polynomial fitted by least squares
//! to its `n` nearest correspondences. The polynomials are built by
//! Gram-Schmidt orthogonalization of the monomials `{1, x, y, x², xy, y²}`
//! over that neighbourhood, so no linear system is solved. A query point is
//! mapped by blending the polynomials of every control point whose support
//! disk contains it, with the compact weight `W(R) = 1 - 3R² + 2R³` of the
//! distance normalized by that control point's support radius.

use thiserror::Error;

use crate::geometry::{wrap_pi, Point};
use crate::raster::{ContourPoint, Pose, Template};

/// Relative norm below which an orthogonalized monomial counts as dependent.
const DEPENDENCE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarpError {
    #[error("{got} correspondences given, at least {need} required")]
    TooFewPoints { got: usize, need: usize },
    #[error("neighbourhood of control point {0} is degenerate even for an affine fit")]
    DegenerateNeighborhood(usize),
    #[error("control points {0} and {1} share a source position")]
    CoincidentSources(usize, usize),
    #[error("non-finite correspondence coordinate")]
    NonFinite,
    #[error("expected {expected} control points, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("weight function argument {0} is negative")]
    NegativeR(f64),
}

/// Polynomial degree of each local fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Degree {
    Linear = 1,
    Quadratic = 2,
}

impl Degree {
    pub fn terms(self) -> usize {
        match self {
            Degree::Linear => 3,
            Degree::Quadratic => 6,
        }
    }
}

/// Source/target control point pairs; sources are distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    sources: Vec<Point>,
    targets: Vec<Point>,
}

impl Correspondences {
    pub fn new(sources: Vec<Point>, targets: Vec<Point>) -> Result<Self, WarpError> {
        if sources.len() != targets.len() {
            return Err(WarpError::CountMismatch {
                expected: sources.len(),
                got: targets.len(),
            });
        }
        if sources.len() < 3 {
            return Err(WarpError::TooFewPoints {
                got: sources.len(),
                need: 3,
            });
        }
        if !sources.iter().chain(&targets).all(|p| p.is_finite()) {
            return Err(WarpError::NonFinite);
        }
        for i in 0..sources.len() {
            for j in i + 1..sources.len() {
                if sources[i] == sources[j] {
                    return Err(WarpError::CoincidentSources(i, j));
                }
            }
        }
        Ok(Self { sources, targets })
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn targets(&self) -> &[Point] {
        &self.targets
    }
}

/// One control point's local polynomial pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub source: Point,
    /// Support radius: distance to the `(n-1)`th nearest other source.
    pub radius: f64,
    /// Degree actually used (may be lower than requested).
    pub degree: Degree,
    /// Normalization: `u = (p - origin) / scale`.
    origin: Point,
    scale: f64,
    f_coef: [f64; 6],
    g_coef: [f64; 6],
    /// RMS residual over the neighbourhood, px.
    pub residual: f64,
    /// Residual at the control point itself, px.
    pub center_residual: f64,
}

#[inline]
fn monomials(u: Point) -> [f64; 6] {
    [1.0, u.x, u.y, u.x * u.x, u.x * u.y, u.y * u.y]
}

impl LocalFit {
    pub fn eval(&self, p: Point) -> Point {
        let u = (p - self.origin) * (1.0 / self.scale);
        let h = monomials(u);
        let t = self.degree.terms();
        let mut out = Point::default();
        for m in 0..t {
            out.x += self.f_coef[m] * h[m];
            out.y += self.g_coef[m] * h[m];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpModel {
    fits: Vec<LocalFit>,
    neighbors: usize,
    degree: Degree,
}

impl WarpModel {
    pub fn fits(&self) -> &[LocalFit] {
        &self.fits
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    /// Requested degree.
    pub fn degree(&self) -> Degree {
        self.degree
    }

    /// Number of local fits that fell back to a lower degree.
    pub fn fallbacks(&self) -> usize {
        self.fits.iter().filter(|f| f.degree < self.degree).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpedPoint {
    pub point: Point,
    /// No support disk covered the query; the nearest fit was used alone.
    pub fallback: bool,
}

pub fn weight_fn(r: f64) -> Result<f64, WarpError> {
    if r < 0.0 || r.is_nan() {
        return Err(WarpError::NegativeR(r));
    }
    Ok(weight(r))
}

#[inline]
fn weight(r: f64) -> f64 {
    if r <= 1.0 {
        1.0 - 3.0 * r * r + 2.0 * r * r * r
    } else {
        0.0
    }
}

/// Degree 2 when at least six control points exist, else degree 1.
pub fn default_degree(count: usize) -> Degree {
    if count >= 6 {
        Degree::Quadratic
    } else {
        Degree::Linear
    }
}

/// `min(N, max(6, ceil(N / 2)))`, never below the term count of `degree`.
pub fn default_neighbors(count: usize, degree: Degree) -> usize {
    count.min(6.max(count.div_ceil(2))).max(degree.terms().min(count))
}

/// Orthonormal basis over the neighbourhood as monomial coefficient rows,
/// or `None` when a monomial is dependent on the earlier ones.
fn gram_schmidt(samples: &[[f64; 6]], terms: usize) -> Option<Vec<[f64; 6]>> {
    let n = samples.len();
    let mut basis_vals: Vec<Vec<f64>> = Vec::with_capacity(terms);
    let mut basis_coef: Vec<[f64; 6]> = Vec::with_capacity(terms);
    for m in 0..terms {
        let mut v: Vec<f64> = samples.iter().map(|h| h[m]).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut c = [0.0; 6];
        c[m] = 1.0;
        // two sweeps of modified Gram-Schmidt keep the basis orthogonal to
        // working precision
        for _ in 0..2 {
            for (q, qc) in basis_vals.iter().zip(&basis_coef) {
                let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    v[j] -= proj * q[j];
                }
                for k in 0..6 {
                    c[k] -= proj * qc[k];
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= DEPENDENCE_TOL * norm0 {
            return None;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        c.iter_mut().for_each(|a| *a /= norm);
        basis_vals.push(v);
        basis_coef.push(c);
    }
    Some(basis_coef)
}

fn fit_neighbourhood(
    index: usize,
    c: &Correspondences,
    neighbours: &[usize],
    requested: Degree,
) -> Result<LocalFit, WarpError> {
    let src = c.sources();
    let tgt = c.targets();
    let origin = neighbours
        .iter()
        .fold(Point::default(), |acc, &j| acc + src[j])
        * (1.0 / neighbours.len() as f64);
    let rms = (neighbours
        .iter()
        .map(|&j| src[j].distance_sq(origin))
        .sum::<f64>()
        / neighbours.len() as f64)
        .sqrt();
    let scale = if rms > 0.0 { rms } else { 1.0 };
    let samples: Vec<[f64; 6]> = neighbours
        .iter()
        .map(|&j| monomials((src[j] - origin) * (1.0 / scale)))
        .collect();

    let degrees: &[Degree] = match requested {
        Degree::Quadratic => &[Degree::Quadratic, Degree::Linear],
        Degree::Linear => &[Degree::Linear],
    };
    for &degree in degrees {
        let terms = degree.terms();
        if neighbours.len() < terms {
            continue;
        }
        let Some(basis) = gram_schmidt(&samples, terms) else {
            continue;
        };
        let mut f_coef = [0.0; 6];
        let mut g_coef = [0.0; 6];
        for qc in &basis {
            // inner products of the targets with this orthonormal polynomial
            let (mut af, mut ag) = (0.0, 0.0);
            for (h, &j) in samples.iter().zip(neighbours) {
                let q: f64 = (0..terms).map(|k| qc[k] * h[k]).sum();
                af += q * tgt[j].x;
                ag += q * tgt[j].y;
            }
            for k in 0..terms {
                f_coef[k] += af * qc[k];
                g_coef[k] += ag * qc[k];
            }
        }
        let mut fit = LocalFit {
            source: src[index],
            radius: 0.0,
            degree,
            origin,
            scale,
            f_coef,
            g_coef,
            residual: 0.0,
            center_residual: 0.0,
        };
        let sq: f64 = neighbours
            .iter()
            .map(|&j| fit.eval(src[j]).distance_sq(tgt[j]))
            .sum();
        fit.residual = (sq / neighbours.len() as f64).sqrt();
        fit.center_residual = fit.eval(src[index]).distance(tgt[index]);
        return Ok(fit);
    }
    Err(WarpError::DegenerateNeighborhood(index))
}

/// Fits one local polynomial pair per control point.
///
/// Neighbourhoods are the `neighbors` nearest sources (the control point
/// itself included), ordered by distance then by coordinates so the result
/// does not depend on input order. A quadratic neighbourhood whose monomials
/// are dependent on its points falls back to an affine fit; see
/// [`WarpModel::fallbacks`].
pub fn fit_lwm(c: &Correspondences, degree: Degree, neighbors: usize) -> Result<WarpModel, WarpError> {
    let n_pts = c.len();
    let need = degree.terms();
    if n_pts < need || neighbors < need || neighbors > n_pts {
        return Err(WarpError::TooFewPoints {
            got: n_pts.min(neighbors),
            need,
        });
    }
    let src = c.sources();
    let fits = (0..n_pts)
        .map(|i| {
            let mut order: Vec<usize> = (0..n_pts).collect();
            order.sort_by(|&a, &b| {
                src[a]
                    .distance_sq(src[i])
                    .total_cmp(&src[b].distance_sq(src[i]))
                    .then(src[a].x.total_cmp(&src[b].x))
                    .then(src[a].y.total_cmp(&src[b].y))
            });
            order.truncate(neighbors);
            let mut fit = fit_neighbourhood(i, c, &order, degree)?;
            fit.radius = src[*order.last().unwrap()].distance(src[i]);
            Ok(fit)
        })
        .collect::<Result<Vec<_>, WarpError>>()?;
    Ok(WarpModel {
        fits,
        neighbors,
        degree,
    })
}

/// Weighted blend of the local polynomials at `p`.
pub fn apply_warp(w: &WarpModel, p: Point) -> WarpedPoint {
    let mut sum_w = 0.0;
    let mut acc = Point::default();
    for fit in &w.fits {
        let r = p.distance(fit.source) / fit.radius;
        let wt = weight(r);
        if wt > 0.0 {
            sum_w += wt;
            acc = acc + fit.eval(p) * wt;
        }
    }
    if sum_w > 0.0 {
        return WarpedPoint {
            point: acc * (1.0 / sum_w),
            fallback: false,
        };
    }
    let nearest = w
        .fits
        .iter()
        .min_by(|a, b| a.source.distance_sq(p).total_cmp(&b.source.distance_sq(p)))
        .expect("a fitted model has at least three control points");
    WarpedPoint {
        point: nearest.eval(p),
        fallback: true,
    }
}

/// Degree and neighbourhood size for [`warp_template`]; `None` picks the
/// count-based defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LwmConfig {
    pub degree: Option<Degree>,
    pub neighbors: Option<usize>,
}

impl LwmConfig {
    pub fn resolve(&self, count: usize) -> (Degree, usize) {
        let degree = self.degree.unwrap_or_else(|| default_degree(count));
        let neighbors = self
            .neighbors
            .unwrap_or_else(|| default_neighbors(count, degree))
            .min(count);
        (degree, neighbors)
    }
}

/// Fits the warp taking posed template control points onto `base_cps`.
pub fn fit_template_warp(
    t: &Template,
    base_cps: &[Point],
    pose: &Pose,
    cfg: &LwmConfig,
) -> Result<WarpModel, WarpError> {
    let sources = t.posed_control_points(pose);
    if base_cps.len() != sources.len() {
        return Err(WarpError::CountMismatch {
            expected: sources.len(),
            got: base_cps.len(),
        });
    }
    let c = Correspondences::new(sources, base_cps.to_vec())?;
    let (degree, neighbors) = cfg.resolve(c.len());
    fit_lwm(&c, degree, neighbors)
}

/// Undirected tangent of the warped curve at `p`, from the warp's
/// directional derivative along the source tangent.
pub fn warp_tangent(w: &WarpModel, p: Point, tangent: f64) -> f64 {
    const H: f64 = 0.25;
    let dir = Point::new(tangent.cos(), tangent.sin()) * H;
    let a = apply_warp(w, p - dir).point;
    let b = apply_warp(w, p + dir).point;
    let d = b - a;
    if d.norm() > 0.0 {
        wrap_pi(d.y.atan2(d.x))
    } else {
        wrap_pi(tangent)
    }
}

/// Posed contour pushed through the warp that takes posed template control
/// points onto `base_cps`, with tangents of the warped curve.
pub fn warp_template(
    t: &Template,
    base_cps: &[Point],
    pose: &Pose,
) -> Result<Vec<ContourPoint>, WarpError> {
    warp_template_with(t, base_cps, pose, &LwmConfig::default())
}

pub fn warp_template_with(
    t: &Template,
    base_cps: &[Point],
    pose: &Pose,
    cfg: &LwmConfig,
) -> Result<Vec<ContourPoint>, WarpError> {
    let model = fit_template_warp(t, base_cps, pose, cfg)?;
    Ok(t.posed_contour(pose)
        .iter()
        .map(|c| {
            let q = apply_warp(&model, c.point()).point;
            ContourPoint {
                x: q.x,
                y: q.y,
                tangent: warp_tangent(&model, c.point(), c.tangent),
            }
        })
        .collect())
}
