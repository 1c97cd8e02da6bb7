use std::path::Path;
use std::process::{Command, Output};

fn deftemp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deftemp")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(dir: &Path, extra: &[&str]) {
    let mut args = vec!["fixture", "--size", "128", "--out", path(dir)];
    args.extend_from_slice(extra);
    let out = deftemp(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fixture_writes_its_files() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &["--shape", "c-shape", "--pose", "s=1,theta=0.52,dx=40,dy=20", "--deform", "3", "--noise", "0.03"]);
    for name in ["image.pgm", "template.txt", "truth.txt", "boundary.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let truth = std::fs::read_to_string(dir.path().join("truth.txt")).unwrap();
    assert!(truth.contains("shape=c-shape"));
    assert!(truth.contains("pose_theta=0.52"));
    assert!(truth.contains("pose_dx=40\n"));
    assert!(truth.lines().any(|l| l.starts_with("cp7=")));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &["--noise", "0.02"]);
    let out_dir = dir.path().join("out");
    let out = deftemp(&[
        "run",
        "--image",
        path(&dir.path().join("image.pgm")),
        "--template",
        path(&dir.path().join("template.txt")),
        "--out",
        path(&out_dir),
        "--pso-iters",
        "20",
        "--dump-trace",
        "--dump-epf",
        "--dump-warp",
        "--dump-roi",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("final_cost="));
    for name in ["overlay.png", "report.txt", "candidates.csv", "trace.csv", "epf.pgm", "warp.csv", "roi.pgm"] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.starts_with("status=ok\n"));
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iteration,gbest"));
    assert_eq!(trace.lines().count(), 22);
}

#[test]
fn blank_image_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &[]);
    let blank = dir.path().join("blank.pgm");
    let mut bytes = b"P5\n128 128\n255\n".to_vec();
    bytes.extend(std::iter::repeat_n(90u8, 128 * 128));
    std::fs::write(&blank, bytes).unwrap();
    let out_dir = dir.path().join("out");
    let out = deftemp(&["run", "--image", path(&blank), "--template", path(&dir.path().join("template.txt")), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("status=no_candidates"));
    assert!(report.contains("edge_count=0"));
}

#[test]
fn bad_settings_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &[]);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "stage3.particles = many\n").unwrap();
    let image = dir.path().join("image.pgm");
    let template = dir.path().join("template.txt");
    let out_dir = dir.path().join("out");
    let args = ["run", "--image", path(&image), "--template", path(&template), "--out", path(&out_dir)];
    let mut with_cfg = args.to_vec();
    with_cfg.extend(["--config", path(&cfg)]);
    assert_eq!(deftemp(&with_cfg).status.code(), Some(3));
    let mut with_alpha = args.to_vec();
    with_alpha.push("--alpha=-1");
    assert_eq!(deftemp(&with_alpha).status.code(), Some(3));
    assert_eq!(deftemp(&["run", "--bogus"]).status.code(), Some(3));
}

#[test]
fn missing_files_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &[]);
    let out = deftemp(&[
        "run",
        "--image",
        path(&dir.path().join("nope.pgm")),
        "--template",
        path(&dir.path().join("template.txt")),
        "--out",
        path(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn track_processes_a_sequence() {
    let dir = tempfile::tempdir().unwrap();
    for (i, dx) in ["dx=-4", "dx=0", "dx=4"].iter().enumerate() {
        let frame = dir.path().join(format!("f{i}"));
        fixture(&frame, &["--pose", dx, "--noise", "0.02", "--seed", &i.to_string()]);
        std::fs::copy(frame.join("image.pgm"), dir.path().join(format!("frame{i}.pgm"))).unwrap();
    }
    let pattern = dir.path().join("frame*.pgm");
    let out_dir = dir.path().join("out");
    let out = deftemp(&[
        "track",
        "--images",
        path(&pattern),
        "--template",
        path(&dir.path().join("f0/template.txt")),
        "--out",
        path(&out_dir),
        "--pso-iters",
        "20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("track.txt")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(1).unwrap().contains("stage1_runs=0"));
    for i in 0..3 {
        assert!(out_dir.join(format!("frame_{i:03}/report.txt")).is_file());
    }
}
