use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SCENE: &str = r#"
method = "pbem"

[geometry]
kind = "sphere"
radius = 0.1
refinement = 2

[lattice]
counts = [3, 2, 1]
pitch = [0.35, 0.35, 0.35]

[[sources]]
kind = "plane_wave"
direction = [1.0, 0.0, 0.0]

[sweep]
f_min = 400.0
f_max = 600.0
count = 1

[fmm]
nt = 8

[solver]
tol = 1e-8

[output.il_grid]
min = [1.5, -0.2, 0.0]
max = [2.0, 0.6, 0.0]
counts = [2, 3, 1]
"#;

fn fmpbem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmpbem")).args(args).output().unwrap()
}

fn write_scene(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("scene.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run(dir: &TempDir, scene: &str, out: &str, extra: &[&str]) -> Output {
    let out = dir.path().join(out);
    let mut args = vec!["run", "--config", scene, "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fmpbem(&args)
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn single_frequency_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, SCENE);
    let o = run(&dir, &scene, "out", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("out/il.csv"));
    assert_eq!(r[0], ["frequency_hz", "il_db", "iterations", "residual", "wall_time_s", "status"]);
    assert_eq!(r.len(), 2);
    assert_eq!(r[1][0].parse::<f64>().unwrap(), 400.0);
    assert!(r[1][1].parse::<f64>().unwrap().is_finite());
    assert_eq!(r[1][5], "converged");
    assert!(r[1][3].parse::<f64>().unwrap() < 1e-8);
    let digits = r[1][1].split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(digits.len(), 17);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scene"]["method"], "pbem");
    assert_eq!(manifest["scene"]["solver"]["restart"], 100);
    assert_eq!(manifest["scene"]["medium"]["c"], 343.0);
    assert_eq!(manifest["n_dof"], 6 * 24);
}

#[test]
fn unknown_method_is_a_parse_error_without_outputs() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, &SCENE.replace("\"pbem\"", "\"multigrid\""));
    let o = run(&dir, &scene, "out", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("method"));
    assert!(!dir.path().join("out").exists());

    let scene = write_scene(&dir, SCENE);
    let o = run(&dir, &scene, "out", &["--method", "multigrid"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_scene_reports_location() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, &SCENE.replace("count = 1", "count = 1\ncolour = 3"));
    let o = run(&dir, &scene, "out", &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("colour") && err.contains("line"), "{err}");
    assert_eq!(fmpbem(&["run"]).status.code(), Some(1));
    assert_eq!(fmpbem(&["--help"]).status.code(), Some(0));
}

#[test]
fn pbem_and_fmpbem_agree() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, &SCENE.replace("count = 1", "count = 2"));
    assert!(run(&dir, &scene, "pbem", &[]).status.success());
    assert!(run(&dir, &scene, "fmm", &["--method", "fmpbem"]).status.success());
    let a = rows(&dir.path().join("pbem/il.csv"));
    let b = rows(&dir.path().join("fmm/il.csv"));
    assert_eq!(a.len(), 3);
    for (x, y) in a[1..].iter().zip(&b[1..]) {
        let (ia, ib) = (x[1].parse::<f64>().unwrap(), y[1].parse::<f64>().unwrap());
        assert!((ia - ib).abs() < 0.05, "{ia} vs {ib}");
    }
}

#[test]
fn repeated_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    let text = format!("{SCENE}\n[output.field_grid]\nmin = [1.0, 0.0, 0.0]\nmax = [1.0, 0.35, 0.0]\ncounts = [1, 4, 1]\n");
    let scene = write_scene(&dir, &text);
    for name in ["a", "b"] {
        let o = run(&dir, &scene, name, &["--threads", "2", "--method", "fmpbem"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let field = |d: &str| fs::read_to_string(dir.path().join(d).join("field_400.csv")).unwrap();
    assert_eq!(field("a"), field("b"));
    assert_eq!(field("a").lines().next().unwrap(), "x,y,z,re_p,im_p,abs_p");
    assert_eq!(field("a").lines().count(), 5);
    let il = |d: &str| rows(&dir.path().join(d).join("il.csv"))[1][1].clone();
    assert_eq!(il("a"), il("b"));
}

#[test]
fn benchmark_writes_one_row_per_size_and_method() {
    let dir = TempDir::new().unwrap();
    let scene = write_scene(&dir, &format!("{SCENE}\n[benchmark]\nsizes = [1, 2]\nrepetitions = 2\n"));
    let out = dir.path().join("bench");
    let o = fmpbem(&["benchmark", "--config", &scene, "--output", out.to_str().unwrap(), "--sizes", "1,3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("benchmark.csv"));
    assert_eq!(r[0], ["method", "size", "n_dof", "assembly_s", "matvec_s", "memory_bytes"]);
    assert_eq!(r.len(), 7);
    assert!(r[1..].iter().all(|row| row[4].parse::<f64>().unwrap() > 0.0));
    assert_eq!(r[2][2], "216");
}

#[test]
fn sphere_array_fields_agree_across_backends() {
    let dir = TempDir::new().unwrap();
    let text = r#"
[geometry]
kind = "sphere"
radius = 0.1
refinement = 4

[lattice]
counts = [5, 5, 1]
pitch = [0.35, 0.35, 0.35]

[[sources]]
kind = "plane_wave"
direction = [1.0, 0.0, 0.0]

[sweep]
f_min = 500.0
f_max = 500.0

[fmm]
nt = 4

[solver]
tol = 1e-8

[output.field_grid]
min = [-0.5, -0.5, 0.0]
max = [2.0, 1.9, 0.0]
counts = [6, 6, 1]
"#;
    let scene = write_scene(&dir, text);
    for m in ["pbem", "fmpbem"] {
        let o = run(&dir, &scene, m, &["--method", m]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let field = |d: &str| -> Vec<(f64, f64)> {
        rows(&dir.path().join(d).join("field_500.csv"))[1..]
            .iter()
            .map(|r| (r[3].parse().unwrap(), r[4].parse().unwrap()))
            .collect()
    };
    let (a, b) = (field("pbem"), field("fmpbem"));
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x.0 - y.0).powi(2) + (x.1 - y.1).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x.0 * x.0 + x.1 * x.1).sum::<f64>().sqrt();
    assert!(diff / norm < 1e-4, "relative field difference {}", diff / norm);
}
