mod common;

use common::{deformed_ellipse, deformed_ellipse_with};
use deftemp::edge::{build_epf, detect_edges};
use deftemp::geometry::mean_distance_to_polyline;
use deftemp::lwm::warp_template;
use deftemp::swarm::{cost, cost_breakdown, minimize, optimize, SwarmConfig};
use deftemp::Point;

#[test]
fn cost_grows_with_alpha_for_a_fixed_move() {
    let f = deformed_ellipse(0);
    let field = build_epf(&detect_edges(&f.image, 1.0).unwrap()).unwrap();
    let mut moved = f.template.posed_control_points(&f.truth_pose);
    moved[2] = moved[2] + Point::new(4.0, -3.0);
    let mut prev = f64::NEG_INFINITY;
    for alpha in [0.0, 0.005, 0.01, 0.1, 1.0] {
        let cfg = SwarmConfig { alpha, ..SwarmConfig::default() };
        let c = cost(&f.template, &f.truth_pose, &moved, &field, &cfg).unwrap();
        assert!(c >= prev);
        prev = c;
    }
}

#[test]
fn undisturbed_control_points_carry_no_penalty() {
    let f = deformed_ellipse(1);
    let field = build_epf(&detect_edges(&f.image, 1.0).unwrap()).unwrap();
    let posed = f.template.posed_control_points(&f.truth_pose);
    let b = cost_breakdown(&f.template, &f.truth_pose, &posed, &field, &SwarmConfig::default()).unwrap();
    assert_eq!(b.penalty, 0.0);
    assert!((0.0..=1.0).contains(&b.energy));
}

#[test]
fn swarm_finds_a_shifted_bowl() {
    let target = [3.0, -2.0, 1.5];
    let cfg = SwarmConfig { iterations: 100, seed: 9, ..SwarmConfig::default() };
    let out = minimize(&[0.0; 3], |x| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(), &cfg).unwrap();
    assert!(out.cost < 1e-3, "{}", out.cost);
    assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.best.iter().all(|v| v.abs() <= cfg.radius));
}

#[test]
fn refinement_recovers_a_deformed_ellipse() {
    let f = deformed_ellipse(0);
    let field = build_epf(&detect_edges(&f.image, 1.0).unwrap()).unwrap();
    let cfg = SwarmConfig::default();
    let r = optimize(&f.template, &f.truth_pose, &field, &cfg).unwrap();
    let seed = f.template.posed_control_points(&f.truth_pose);
    let seed_cost = cost(&f.template, &f.truth_pose, &seed, &field, &cfg).unwrap();
    assert!(r.cost <= seed_cost);
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    for (p, s) in r.control_points.iter().zip(&seed) {
        assert!((p.x - s.x).abs() <= cfg.radius && (p.y - s.y).abs() <= cfg.radius);
    }
    let contour: Vec<Point> = warp_template(&f.template, &r.control_points, &f.truth_pose)
        .unwrap()
        .iter()
        .map(|c| c.point())
        .collect();
    let err = mean_distance_to_polyline(&contour, &f.truth_boundary);
    assert!(err < 2.0, "mean boundary error {err}");
}

#[test]
fn refinement_recovers_deformed_control_points() {
    // eight points under-sample three lobes; sixteen let the warp follow them
    let f = deformed_ellipse_with(0, 16);
    let field = build_epf(&detect_edges(&f.image, 1.0).unwrap()).unwrap();
    let r = optimize(&f.template, &f.truth_pose, &field, &SwarmConfig::default()).unwrap();
    let cp_err: f64 = r
        .control_points
        .iter()
        .zip(&f.truth_control_points)
        .map(|(a, b)| a.distance(*b))
        .sum::<f64>()
        / r.control_points.len() as f64;
    assert!(cp_err < 2.0, "mean control point error {cp_err}");
}

#[test]
fn same_seed_same_trace() {
    let f = deformed_ellipse(2);
    let field = build_epf(&detect_edges(&f.image, 1.0).unwrap()).unwrap();
    let cfg = SwarmConfig { iterations: 30, ..SwarmConfig::default() };
    let a = optimize(&f.template, &f.truth_pose, &field, &cfg).unwrap();
    let b = optimize(&f.template, &f.truth_pose, &field, &cfg).unwrap();
    assert_eq!(a, b);
}
