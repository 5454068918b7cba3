use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mem_core::dataset::{serialize_idx, ImageSet};
use mem_core::io::{encode_pgm, read_pgm};
use tempfile::TempDir;

const SIDE: usize = 4;

fn mem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mem")).env_remove("MEM_THREADS").args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// 20 images of 4x4 in mirrored pairs `v`, `256 - v`: the mean image is exactly 128/255 everywhere.
fn write_fixture(dir: &Path) -> PathBuf {
    let d = SIDE * SIDE;
    let mut px = Vec::new();
    for j in 0..10usize {
        let img: Vec<u8> = (0..d).map(|p| (1 + (j * 37 + p * 11 + j * p * 3) % 255) as u8).collect();
        px.extend(&img);
        px.extend(img.iter().map(|v| (256 - *v as u16) as u8));
    }
    let set = ImageSet::new(px, 20, SIDE, SIDE).unwrap();
    let path = dir.join("images.idx");
    fs::write(&path, serialize_idx(&set)).unwrap();
    path
}

fn write_pgm_file(dir: &Path, name: &str, value: f64) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, encode_pgm(&vec![value; SIDE * SIDE], SIDE, SIDE).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

/// Output files with the manifest's per-process `invocation` block removed.
fn reproducible(dir: &Path) -> Vec<(String, Vec<u8>)> {
    files(dir)
        .into_iter()
        .map(|(name, bytes)| {
            if name == "manifest.json" {
                let mut m: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                m.as_object_mut().unwrap().remove("invocation");
                m["parameters"]["out"] = serde_json::Value::Null;
                (name, serde_json::to_vec(&m).unwrap())
            } else {
                (name, bytes)
            }
        })
        .collect()
}

#[test]
fn missing_data_is_usage_error() {
    let o = mem(&["denoise", "--ground-truth", "0", "--noise", "gaussian", "--alpha", "1", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&mem(&[])), 2);
    assert_eq!(code(&mem(&["--help"])), 0);
}

#[test]
fn zero_counts_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let data = write_fixture(tmp.path());
    let b = write_pgm_file(tmp.path(), "b.pgm", 0.5);
    let out = tmp.path().join("o");
    let o = mem(&["rates", "--data", s(&data), "--b", s(&b), "--alpha", "1", "--grid", "10,10,1", "--trials", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = mem(&["diagnose", "--data", s(&data), "--b", s(&b), "--alpha", "1", "--ball-samples", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = mem(&["rates", "--data", s(&data), "--alpha", "1", "--grid", "10,10,1", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "needs --b or --synthesize");
    let o = mem(&["denoise", "--data", s(&data), "--ground-truth", "99", "--noise", "gaussian", "--alpha", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = mem(&["--threads", "0", "rates", "--data", s(&data), "--synthesize", "--alpha", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn domain_failures_exit_one() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.idx");
    fs::write(&bad, [0, 0, 8, 1, 0, 0, 0, 1]).unwrap();
    let b = write_pgm_file(tmp.path(), "b.pgm", 0.5);
    let out = tmp.path().join("o");
    let o = mem(&["diagnose", "--data", s(&bad), "--b", s(&b), "--alpha", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));
    let data = write_fixture(tmp.path());
    let o = mem(&["rates", "--data", s(&data), "--b", s(&b), "--alpha", "1", "--grid", "10,30,2", "--trials", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "grid beyond the dataset size");
}

#[test]
fn mean_observation_returns_the_mean_image() {
    let tmp = TempDir::new().unwrap();
    let data = write_fixture(tmp.path());
    let truth = write_pgm_file(tmp.path(), "mean.pgm", 128.0 / 255.0);
    let out = tmp.path().join("o");
    let o = mem(&[
        "denoise", "--data", s(&data), "--ground-truth", s(&truth), "--noise", "gaussian", "--level", "0",
        "--alpha", "1", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let x = read_pgm(out.join("x_bar.pgm")).unwrap();
    assert!(x.pixels.iter().all(|v| (v - 128.0 / 255.0).abs() <= 1.0 / 255.0));
    for f in ["b.pgm", "x_bar.pgm", "x_thresholded.pgm", "x_masked.pgm", "nearest_neighbor.pgm", "weights.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let weights = fs::read_to_string(out.join("weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 21);
}

#[test]
fn denoise_is_byte_identical_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let data = write_fixture(tmp.path());
    let run = |threads: &str, dir: &str, noise: &str| {
        let out = tmp.path().join(dir);
        let o = mem(&[
            "--threads", threads, "denoise", "--data", s(&data), "--ground-truth", "3", "--noise", noise,
            "--alpha", "2", "--n", "15", "--seed", "5", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    for noise in ["gaussian", "salt-pepper"] {
        let a = run("1", &format!("{noise}1"), noise);
        let b = run("8", &format!("{noise}8"), noise);
        let c = run("1", &format!("{noise}1b"), noise);
        assert_eq!(reproducible(&a), reproducible(&b));
        assert_eq!(reproducible(&a), reproducible(&c));
    }
}

#[test]
fn rates_full_data_grid_point_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let data = write_fixture(tmp.path());
    let run = |threads: &str, dir: &str, grid: &str, trials: &str| {
        let out = tmp.path().join(dir);
        let o = mem(&[
            "--threads", threads, "rates", "--data", s(&data), "--synthesize", "--alpha", "1", "--grid", grid,
            "--trials", trials, "--seed", "9", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let full = run("2", "full", "20,20,1", "2");
    let csv = fs::read_to_string(full.join("rates.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n,trial,rel_error,epsilon_cert,wall_time_s");
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        let err: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!(err < 1e-8, "{r}");
    }
    let a = run("1", "a", "5,20,4", "3");
    let b = run("8", "b", "5,20,4", "3");
    assert_eq!(reproducible(&a), reproducible(&b));
    assert_eq!(fs::read_to_string(a.join("rates.csv")).unwrap().lines().count(), 13);
}

#[test]
fn diagnose_constants_match_hand_arithmetic() {
    let tmp = TempDir::new().unwrap();
    let data = write_fixture(tmp.path());
    let b = write_pgm_file(tmp.path(), "b.pgm", 0.5);
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let o = mem(&["diagnose", "--data", s(&data), "--b", s(&b), "--alpha", "1", "--ball-samples", "200", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let out = run("d1");
    let c: serde_json::Value = serde_json::from_slice(&fs::read(out.join("constants.json")).unwrap()).unwrap();
    // ‖b‖ = 4·128/255 after quantization, ‖C‖ = 1, |X| = largest image norm in the fixture
    let b_norm = 4.0 * 128.0 / 255.0;
    let raw = fs::read(&data).unwrap();
    let radius = raw[16..]
        .chunks(SIDE * SIDE)
        .map(|img| img.iter().map(|v| (*v as f64 / 255.0).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let rho_hat = 2.0 * (b_norm + radius);
    let rho0 = rho_hat.max(rho_hat * rho_hat / 2.0 + b_norm * rho_hat + rho_hat * radius);
    assert!((c["rho_hat"].as_f64().unwrap() - rho_hat).abs() <= 1e-12 * rho_hat);
    assert!((c["rho0"].as_f64().unwrap() - rho0).abs() <= 1e-12 * rho0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("bounds_report.json")).unwrap()).unwrap();
    assert_eq!(report["mgf"]["violations"], 0);
    let again = run("d2");
    for f in ["constants.json", "bounds_report.json"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn replay_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = write_fixture(tmp.path());
    let out = tmp.path().join("orig");
    let o = mem(&[
        "denoise", "--data", s(&data), "--ground-truth", "7", "--noise", "salt-pepper", "--alpha", "3",
        "--operator", "blur:0.25,0.5,0.25", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let again = tmp.path().join("replayed");
    let o = mem(&["replay", s(&out.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(reproducible(&out), reproducible(&again));

    // a changed input is refused
    fs::write(&data, b"not the same").unwrap();
    let o = mem(&["replay", s(&out.join("manifest.json")), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 1);
}
