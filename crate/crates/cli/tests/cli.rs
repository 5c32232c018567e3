//! End-to-end behavior of the `mmlab` binary: outputs, exit codes and
//! reproducibility of reports.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn mmlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmlab"))
        .current_dir(dir)
        .env_remove("MMLAB_SEED")
        .args(args)
        .output()
        .expect("mmlab runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn grid9(dir: &Path) -> PathBuf {
    let o = mmlab(dir, &["gen", "grid", "--dim", "2", "--side", "9", "--out", "g.json"]);
    assert_eq!(o.status.code(), Some(0));
    dir.join("g.json")
}

fn constant_potential(dir: &Path, n: usize, c: f64) {
    let v = vec![c; n];
    std::fs::write(dir.join("v.json"), serde_json::to_string(&v).unwrap()).unwrap();
}

#[test]
fn free_path_lambda1_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mmlab(d, &["gen", "path", "--n", "3", "--h", "1", "--out", "p.json"]).status.code(), Some(0));
    let o = mmlab(d, &["spectral", "lambda1", "--space", "p.json", "--domain", "all"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0.0");
}

#[test]
fn interior_path_lambda1_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mmlab(d, &["gen", "path", "--n", "11", "--out", "p.json"]);
    let o = mmlab(d, &["spectral", "lambda1", "--space", "p.json", "--domain", "interior"]);
    assert_eq!(o.status.code(), Some(0));
    let got: f64 = stdout(&o).trim().parse().unwrap();
    let want = 2.0 - 2.0 * (std::f64::consts::PI / 10.0).cos();
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn generated_space_goes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmlab(dir.path(), &["gen", "tree", "--depth", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
}

#[test]
fn corrupted_hierarchy_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    grid9(d);
    assert_eq!(mmlab(d, &["cubes", "build", "--space", "g.json", "--out", "h.json"]).status.code(), Some(0));
    let ok = mmlab(d, &["cubes", "verify", "--space", "g.json", "--hierarchy", "h.json"]);
    assert_eq!(ok.status.code(), Some(0));

    let mut h: Value = serde_json::from_slice(&std::fs::read(d.join("h.json")).unwrap()).unwrap();
    let cubes = h["levels"][0]["cubes"].as_array_mut().unwrap();
    let stolen = cubes[1]["members"][0].clone();
    cubes[0]["members"].as_array_mut().unwrap().push(stolen);
    std::fs::write(d.join("bad.json"), serde_json::to_string(&h).unwrap()).unwrap();

    let o = mmlab(d, &["cubes", "verify", "--space", "g.json", "--hierarchy", "bad.json", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("partition: FAILED"));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    let partition = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "partition").unwrap();
    assert_eq!(partition["pass"], false);
    assert_eq!(partition["worst_case"]["problem"], "point in two cubes");
}

#[test]
fn product_identity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    grid9(d);
    constant_potential(d, 81, 0.5);
    let o = mmlab(
        d,
        &["verify", "product-identity", "--space", "g.json", "--potential", "v.json", "--n-line", "5", "--out", "r.json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert!(report["lambda1_gap"].as_f64().unwrap() < 1e-9);
    assert!(d.join("r.json.manifest.json").exists());
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mmlab(d, &["gen", "path"]).status.code(), Some(2));
    assert_eq!(mmlab(d, &["no-such-command"]).status.code(), Some(2));
    assert_eq!(mmlab(d, &["spectral", "lambda1", "--space", "missing.json"]).status.code(), Some(2));
    grid9(d);
    constant_potential(d, 5, 1.0);
    let o = mmlab(d, &["morrey", "--space", "g.json", "--potential", "v.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(mmlab(d, &["suite", "acceptance", "--scale", "huge"]).status.code(), Some(2));
}

#[test]
fn reports_are_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    grid9(d);
    constant_potential(d, 81, 1.0);
    let args = |out: &'static str, seed: &'static str| {
        vec!["verify", "domination", "--space", "g.json", "--delta", "4", "--trials", "5", "--seed", seed, "--out", out]
    };
    assert_eq!(mmlab(d, &args("a.json", "3")).status.code(), Some(0));
    assert_eq!(mmlab(d, &args("b.json", "3")).status.code(), Some(0));
    assert_eq!(mmlab(d, &args("c.json", "4")).status.code(), Some(0));
    let a = std::fs::read(d.join("a.json")).unwrap();
    let b = std::fs::read(d.join("b.json")).unwrap();
    let c = std::fs::read(d.join("c.json")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);

    // The environment seed overrides the flag.
    let o = Command::new(env!("CARGO_BIN_EXE_mmlab"))
        .current_dir(d)
        .env("MMLAB_SEED", "3")
        .args(args("e.json", "4"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(d.join("e.json")).unwrap(), a);

    let manifest: Value = serde_json::from_slice(&std::fs::read(d.join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["input_digests"]["space"].is_string());
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn failing_check_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    grid9(d);
    // Dropping a cube leaves points uncovered.
    mmlab(d, &["cubes", "build", "--space", "g.json", "--out", "h.json"]);
    let mut h: Value = serde_json::from_slice(&std::fs::read(d.join("h.json")).unwrap()).unwrap();
    h["levels"][0]["cubes"].as_array_mut().unwrap().pop();
    std::fs::write(d.join("bad.json"), serde_json::to_string(&h).unwrap()).unwrap();
    let o = mmlab(
        d,
        &["cubes", "verify", "--space", "g.json", "--hierarchy", "bad.json", "--out", "r.json", "--csv", "r.csv"],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(d.join("r.json").exists());
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(csv.starts_with("key,value"));
    assert!(csv.contains("checks.partition.pass,false"));
}

#[test]
fn sweeps_plot_to_svg() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    grid9(d);
    constant_potential(d, 81, 1.0);
    let o = mmlab(
        d,
        &["morrey", "--space", "g.json", "--potential", "v.json", "--radius", "1,2,4,8", "--plot", "m.svg"],
    );
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(d.join("m.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    // Constant V gives N_{p,R} = R^2 avg V.
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with("= 64.0"), "{}", lines[3]);
}

#[test]
fn json_flag_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    grid9(d);
    let o = mmlab(d, &["analyze", "doubling", "--space", "g.json", "--radius", "2", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["profiles"][0]["doubling"], 5.0);
    assert_eq!(v["manifest"]["seed"], 0);
}
