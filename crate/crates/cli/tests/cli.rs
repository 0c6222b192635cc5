use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], config: &str) -> (Output, TempDir) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("scenario.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_shapeopt"))
        .args(args)
        .arg(&cfg)
        .arg("--output")
        .arg(&out)
        .output()
        .unwrap();
    (output, dir)
}

fn out_file(dir: &TempDir, name: &str) -> String {
    fs::read_to_string(dir.path().join("out").join(name)).unwrap()
}

const J3_ONLY: &str = r#"
[geometry]
inclusion = { kind = "polygon", radius = 0.25, sides = 12, phase = 0.1 }
boundary_vertices = 24
[objective]
nu1 = 0.0
nu2 = 0.0
nu3 = 16.0
nu4 = 0.0
[check]
directions = 2
"#;

#[test]
fn zero_weights_pass_vacuously() {
    let cfg = "[objective]\nnu1 = 0.0\nnu2 = 0.0\nnu3 = 0.0\nnu4 = 0.0\n[geometry]\nboundary_vertices = 16";
    let (o, dir) = run(&["check-gradient"], cfg);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(out_file(&dir, "gradient_check.csv").lines().count(), 1);
}

#[test]
fn volume_term_gradient_passes() {
    let (o, dir) = run(&["check-gradient"], J3_ONLY);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = out_file(&dir, "gradient_check.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0], "3");
        let order: f64 = f[3].parse().unwrap();
        assert!((order - 1.0).abs() < 0.05);
        assert_eq!(f[4], "true");
    }
}

#[test]
fn corrupted_load_fails_check() {
    let cfg = format!("{J3_ONLY}corrupt = 1.05\n");
    let (o, _dir) = run(&["check-gradient"], &cfg);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAILED"));
}

const GEOMETRIC: &str = r#"
[geometry]
inclusion = { kind = "star", radius = 0.24, amplitude = 0.2, lobes = 5 }
boundary_vertices = 24
[objective]
nu1 = 0.0
nu2 = 0.0
nu3 = 4.0
nu4 = 1.0
perimeter_form = "volume"
[optimizer]
max_iterations = 4
[output]
vtk_every_iteration = true
"#;

#[test]
fn optimize_writes_artifacts_with_decreasing_objective() {
    let (o, dir) = run(&["optimize"], GEOMETRIC);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let history = out_file(&dir, "history.csv");
    let mut lines = history.lines();
    assert_eq!(
        lines.next(),
        Some("iter,J,j1,j2,j3,j4,gs_norm,nu4,step_scale")
    );
    let j: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(j.len(), 4);
    assert!(j.windows(2).all(|w| w[1] < w[0]), "{j:?}");
    for name in [
        "initial.vtk",
        "final.vtk",
        "final.mesh",
        "iter_0001.vtk",
        "iter_0004.vtk",
    ] {
        assert!(dir.path().join("out").join(name).is_file(), "{name}");
    }
}

#[test]
fn optimize_is_deterministic() {
    let (_, a) = run(&["optimize"], GEOMETRIC);
    let (_, b) = run(&["optimize"], GEOMETRIC);
    for name in ["history.csv", "final.mesh", "final.vtk"] {
        assert_eq!(out_file(&a, name), out_file(&b, name), "{name}");
    }
}

#[test]
fn single_level_curvature_study() {
    let (o, dir) = run(
        &["curvature-study"],
        "[geometry]\nlevels = 1\ninclusion = { kind = \"square\", half_side = 0.2 }",
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(out_file(&dir, "curvature.csv").lines().count(), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("at least two levels"));
}

#[test]
fn square_curvature_grows_like_inverse_width() {
    let cfg = "[geometry]\nlevels = 4\nsnap = false\nboundary_vertices = 16\ninclusion = { kind = \"square\", half_side = 0.2 }";
    let (o, _dir) = run(&["curvature-study"], cfg);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let slope: f64 = stdout
        .lines()
        .last()
        .unwrap()
        .rsplit(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 1.0).abs() < 0.05, "{slope}");
}

#[test]
fn one_level_bench_is_a_direct_solve() {
    let (o, dir) = run(
        &["mg-bench"],
        "[geometry]\nboundary_vertices = 16\n[bench]\nmin_level = 1\nmax_level = 1",
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = out_file(&dir, "mg_bench.csv");
    assert_eq!(csv.lines().nth(1).unwrap().rsplit(',').next(), Some("1"));
}

#[test]
fn invalid_config_exits_with_one() {
    let (o, dir) = run(&["optimize"], "[objective]\nnu4 = -1.0");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu4"));
    assert!(!Path::new(&dir.path().join("out")).exists());
}

#[test]
fn missing_config_exits_with_one() {
    let output = Command::new(env!("CARGO_BIN_EXE_shapeopt"))
        .args(["mg-bench", "/nonexistent/scenario.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_two() {
    let cfg = "[geometry]\nboundary_vertices = 16\n[solver]\nmax_iter = 1\n[bench]\nmin_level = 3\nmax_level = 3";
    let (o, _dir) = run(&["mg-bench"], cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical failure"));
}
