#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conic-purge")).args(args).output().expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "conic-purge {args:?} exited with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

/// Semi-minor axis of the a = 5, ε = 0.95 ellipse.
pub fn typical_b() -> f64 {
    5.0 * (1.0 - 0.95f64 * 0.95).sqrt()
}

pub fn ellipse_config(inliers: usize, outliers: usize, sigma0: f64, sigma1: f64, seed: u64) -> Value {
    json!({
        "model": {"ellipse": {"center": [0.0, 0.0], "semi_axes": [5.0, typical_b()], "rotation": 0.0}},
        "inliers": inliers,
        "outliers": outliers,
        "sigma0": sigma0,
        "sigma1": sigma1,
        "seed": seed,
    })
}

pub fn ellipsoid_config(inliers: usize, outliers: usize, sigma0: f64, sigma1: f64, seed: u64) -> Value {
    json!({
        "model": {"ellipsoid": {
            "center": [0.0, 0.0, 0.0],
            "semi_axes": [5.0, 4.0, 3.0],
            "orientation": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }},
        "inliers": inliers,
        "outliers": outliers,
        "sigma0": sigma0,
        "sigma1": sigma1,
        "seed": seed,
    })
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Generates a dataset CSV from `config` into `dir/name`.
pub fn generate(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let cfg = write_json(dir, &format!("{name}.json"), config);
    let out = dir.join(name);
    run_ok(&["generate", p(&cfg), p(&out)]);
    out
}

/// Data rows of a CSV with a header.
pub fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

pub fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(str::to_owned).collect()
}
