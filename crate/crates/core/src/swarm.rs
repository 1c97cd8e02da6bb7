//! Stage 3: particle swarm search over control-point positions.
//!
//! Each particle is a full set of base-frame control points. Its cost is the
//! contour energy of the template warped onto those points plus a rigidity
//! penalty on their displacement from the posed template. Every particle
//! owns a ChaCha8 stream (`seed`, stream = particle index) so the result
//! does not depend on how cost evaluations are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::edge::PotentialField;
use crate::geometry::Point;
use crate::lwm::{warp_template_with, LwmConfig};
use crate::matching::contour_energy;
use crate::raster::{Pose, Template};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwarmError {
    #[error("point lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid swarm configuration: {0}")]
    InvalidConfig(String),
}

/// How squared control-point displacements are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyMode {
    Sum,
    #[default]
    Mean,
}

impl std::str::FromStr for PenaltyMode {
    type Err = SwarmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            other => Err(SwarmError::InvalidConfig(format!("unknown penalty mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Half-width of each control point's search box, px.
    pub radius: f64,
    pub alpha: f64,
    pub seed: u64,
    pub stop_energy: Option<f64>,
    pub penalty_mode: PenaltyMode,
    pub lwm: LwmConfig,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 30,
            iterations: 200,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            radius: 10.0,
            alpha: 0.01,
            seed: 0,
            stop_energy: None,
            penalty_mode: PenaltyMode::Mean,
            lwm: LwmConfig::default(),
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), SwarmError> {
        let bad = |m: &str| Err(SwarmError::InvalidConfig(m.to_string()));
        if self.particles < 2 {
            return bad("at least two particles are required");
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("alpha", self.alpha),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be a finite value >= 0"));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("radius must be positive");
        }
        if matches!(self.stop_energy, Some(e) if e.is_nan()) {
            return bad("stop_energy must not be NaN");
        }
        Ok(())
    }
}

/// Aggregated squared displacement between two point lists, times `alpha`.
pub fn penalty_with(
    original: &[Point],
    moved: &[Point],
    alpha: f64,
    mode: PenaltyMode,
) -> Result<f64, SwarmError> {
    if original.len() != moved.len() {
        return Err(SwarmError::LengthMismatch(original.len(), moved.len()));
    }
    let sum: f64 = original.iter().zip(moved).map(|(a, b)| a.distance_sq(*b)).sum();
    let agg = match mode {
        PenaltyMode::Sum => sum,
        PenaltyMode::Mean if original.is_empty() => 0.0,
        PenaltyMode::Mean => sum / original.len() as f64,
    };
    Ok(alpha * agg)
}

/// `alpha` times the summed squared displacement.
pub fn penalty(original: &[Point], moved: &[Point], alpha: f64) -> Result<f64, SwarmError> {
    penalty_with(original, moved, alpha, PenaltyMode::Sum)
}

/// Energy and penalty of one control-point configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub energy: f64,
    pub penalty: f64,
    /// The warp could not be fitted; `energy` is then the worst case 1.
    pub degenerate: bool,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.energy + self.penalty
    }
}

pub fn cost_breakdown(
    template: &Template,
    pose: &Pose,
    cps: &[Point],
    field: &PotentialField,
    cfg: &SwarmConfig,
) -> Result<CostBreakdown, SwarmError> {
    let original = template.posed_control_points(pose);
    cost_breakdown_against(template, pose, Anchor::Fixed(&original), cps, field, cfg)
}

/// Reference positions for the rigidity penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor<'a> {
    /// Displacements are measured from these points.
    Fixed(&'a [Point]),
    /// These points are first shifted by the mean displacement, so rigid
    /// translation is free and only relative motion is penalized.
    Floating(&'a [Point]),
}

impl Anchor<'_> {
    fn points(&self) -> &[Point] {
        match self {
            Anchor::Fixed(p) | Anchor::Floating(p) => p,
        }
    }

    /// Penalty of `moved` against this anchor.
    pub fn penalty(&self, moved: &[Point], alpha: f64, mode: PenaltyMode) -> Result<f64, SwarmError> {
        match *self {
            Anchor::Fixed(base) => penalty_with(base, moved, alpha, mode),
            Anchor::Floating(base) => {
                if base.len() != moved.len() {
                    return Err(SwarmError::LengthMismatch(base.len(), moved.len()));
                }
                let shift = mean_offset(base, moved);
                let shifted: Vec<Point> = base.iter().map(|&b| b + shift).collect();
                penalty_with(&shifted, moved, alpha, mode)
            }
        }
    }
}

/// Mean of `moved - base`; zero for empty input.
pub fn mean_offset(base: &[Point], moved: &[Point]) -> Point {
    if base.is_empty() {
        return Point::new(0.0, 0.0);
    }
    let n = base.len() as f64;
    base.iter()
        .zip(moved)
        .fold(Point::new(0.0, 0.0), |acc, (b, m)| acc + (*m - *b) * (1.0 / n))
}

/// [`cost_breakdown`] with the penalty measured against `anchor` instead of
/// the fixed posed template control points.
pub fn cost_breakdown_against(
    template: &Template,
    pose: &Pose,
    anchor: Anchor<'_>,
    cps: &[Point],
    field: &PotentialField,
    cfg: &SwarmConfig,
) -> Result<CostBreakdown, SwarmError> {
    let penalty = anchor.penalty(cps, cfg.alpha, cfg.penalty_mode)?;
    match warp_template_with(template, cps, pose, &cfg.lwm) {
        Ok(contour) => Ok(CostBreakdown {
            energy: contour_energy(&contour, field),
            penalty,
            degenerate: false,
        }),
        Err(_) => Ok(CostBreakdown {
            energy: 1.0,
            penalty,
            degenerate: true,
        }),
    }
}

/// Warped-contour energy plus the rigidity penalty against the posed
/// template control points.
pub fn cost(
    template: &Template,
    pose: &Pose,
    cps: &[Point],
    field: &PotentialField,
    cfg: &SwarmConfig,
) -> Result<f64, SwarmError> {
    cost_breakdown(template, pose, cps, field, cfg).map(|c| c.total())
}

/// Result of a swarm run.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmOutcome {
    pub best: Vec<f64>,
    pub cost: f64,
    /// Global best cost after initialisation and after every iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Particle {
    rng: ChaCha8Rng,
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best_cost: f64,
}

fn clamp_to_box(x: &mut [f64], center: &[f64], radius: f64) {
    for (xi, ci) in x.iter_mut().zip(center) {
        *xi = xi.clamp(ci - radius, ci + radius);
    }
}

fn global_best(particles: &[Particle]) -> usize {
    let mut g = 0;
    for (i, p) in particles.iter().enumerate() {
        if p.best_cost < particles[g].best_cost {
            g = i;
        }
    }
    g
}

/// Minimises `f` over the box `center ± radius` (per coordinate).
///
/// Particle 0 starts exactly at `center`; the rest start uniformly in the
/// box with velocities uniform in `±radius`. Velocities are clamped to
/// `±2 radius` and positions to the box. With zero iterations, or when
/// particle 0 already meets `stop_energy`, only `center` is evaluated.
pub fn minimize<F>(center: &[f64], f: F, cfg: &SwarmConfig) -> Result<SwarmOutcome, SwarmError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let r = cfg.radius;
    let stop = cfg.stop_energy.unwrap_or(f64::NEG_INFINITY);
    let first = f(center);
    if cfg.iterations == 0 || first <= stop {
        return Ok(SwarmOutcome {
            best: center.to_vec(),
            cost: first,
            trace: vec![first],
            iterations: 0,
            evaluations: 1,
        });
    }

    let mut particles: Vec<Particle> = (0..cfg.particles)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let x: Vec<f64> = if i == 0 {
                center.to_vec()
            } else {
                center.iter().map(|c| c + rng.random_range(-r..=r)).collect()
            };
            let v: Vec<f64> = if i == 0 {
                vec![0.0; center.len()]
            } else {
                center.iter().map(|_| rng.random_range(-r..=r)).collect()
            };
            Particle {
                rng,
                best_x: x.clone(),
                x,
                v,
                best_cost: f64::INFINITY,
            }
        })
        .collect();

    let costs: Vec<f64> = particles[1..].par_iter().map(|p| f(&p.x)).collect();
    particles[0].best_cost = first;
    for (p, c) in particles[1..].iter_mut().zip(costs) {
        p.best_cost = c;
    }
    let mut evaluations = cfg.particles;
    let mut g = global_best(&particles);
    let mut trace = vec![particles[g].best_cost];
    let mut iterations = 0;

    while iterations < cfg.iterations && particles[g].best_cost > stop {
        let gbest = particles[g].best_x.clone();
        for p in particles.iter_mut() {
            for d in 0..p.x.len() {
                let r1: f64 = p.rng.random();
                let r2: f64 = p.rng.random();
                let v = cfg.inertia * p.v[d]
                    + cfg.cognitive * r1 * (p.best_x[d] - p.x[d])
                    + cfg.social * r2 * (gbest[d] - p.x[d]);
                p.v[d] = v.clamp(-2.0 * r, 2.0 * r);
                p.x[d] += p.v[d];
            }
            clamp_to_box(&mut p.x, center, r);
        }
        let costs: Vec<f64> = particles.par_iter().map(|p| f(&p.x)).collect();
        for (p, c) in particles.iter_mut().zip(costs) {
            if c < p.best_cost {
                p.best_cost = c;
                p.best_x.clone_from(&p.x);
            }
        }
        evaluations += cfg.particles;
        g = global_best(&particles);
        trace.push(particles[g].best_cost);
        iterations += 1;
    }

    Ok(SwarmOutcome {
        best: particles[g].best_x.clone(),
        cost: particles[g].best_cost,
        trace,
        iterations,
        evaluations,
    })
}

/// Refined control points for one Stage 2 pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pose: Pose,
    pub control_points: Vec<Point>,
    pub cost: f64,
    pub breakdown: CostBreakdown,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
}

fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(x: &[f64]) -> Vec<Point> {
    x.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect()
}

/// Runs the swarm with search boxes around the posed template control points.
pub fn optimize(
    template: &Template,
    seed_pose: &Pose,
    field: &PotentialField,
    cfg: &SwarmConfig,
) -> Result<Refinement, SwarmError> {
    let start = template.posed_control_points(seed_pose);
    optimize_from(template, seed_pose, &start, field, cfg)
}

/// Like [`optimize`] but the search boxes (and particle 0) sit on `start`;
/// the penalty is still measured from the posed template control points.
pub fn optimize_from(
    template: &Template,
    pose: &Pose,
    start: &[Point],
    field: &PotentialField,
    cfg: &SwarmConfig,
) -> Result<Refinement, SwarmError> {
    let original = template.posed_control_points(pose);
    optimize_anchored(template, pose, start, Anchor::Fixed(&original), field, cfg)
}

/// Swarm with boxes around `start` and the rigidity penalty measured
/// against `anchor`. The warp still maps the posed template control points.
pub fn optimize_anchored(
    template: &Template,
    pose: &Pose,
    start: &[Point],
    anchor: Anchor<'_>,
    field: &PotentialField,
    cfg: &SwarmConfig,
) -> Result<Refinement, SwarmError> {
    let n = template.control_points().len();
    if start.len() != n {
        return Err(SwarmError::LengthMismatch(n, start.len()));
    }
    if anchor.points().len() != n {
        return Err(SwarmError::LengthMismatch(n, anchor.points().len()));
    }
    let objective = |x: &[f64]| {
        let cps = unflatten(x);
        let p = anchor.penalty(&cps, cfg.alpha, cfg.penalty_mode).unwrap_or(f64::INFINITY);
        let e = warp_template_with(template, &cps, pose, &cfg.lwm)
            .map(|c| contour_energy(&c, field))
            .unwrap_or(1.0);
        e + p
    };
    let out = minimize(&flatten(start), objective, cfg)?;
    let control_points = unflatten(&out.best);
    let breakdown = cost_breakdown_against(template, pose, anchor, &control_points, field, cfg)?;
    Ok(Refinement {
        pose: *pose,
        control_points,
        cost: out.cost,
        breakdown,
        trace: out.trace,
        iterations: out.iterations,
        evaluations: out.evaluations,
    })
}
