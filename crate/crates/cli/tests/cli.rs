use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lsmeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsmeval")).args(args).output().unwrap()
}

fn synth(dir: &Path, classes: &str, noise: &str, count: &str) {
    let out = lsmeval(&[
        "synth", "--classes", classes, "--per-class", "125", "--dim", "16", "--noise", noise, "--seed", "3",
        "--count", count, "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_then_queryability() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    synth(&maps, "3", "0", "1");
    assert!(maps.join("synth-s3.lsm").is_file() && maps.join("lexicon.json").is_file());

    let out_path = dir.path().join("q.json");
    let out = lsmeval(&[
        "queryability", "--maps", maps.to_str().unwrap(), "--lexicon", maps.join("lexicon.json").to_str().unwrap(),
        "--mode", "segmentation", "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out_path);
    let rows = report["queryability"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["metrics"]["f1"] == 1.0));
}

#[test]
fn vlmaps_flags_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "0.05", "1");
    let out = lsmeval(&[
        "queryability", "--maps", dir.path().to_str().unwrap(), "--lexicon",
        dir.path().join("lexicon.json").to_str().unwrap(), "--threshold", "0.3", "--blur-sigma", "0", "--closing",
        "0", "--dilation", "2", "--seed", "9",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let params = &report["config"]["params"];
    assert_eq!(params["threshold"], 0.3);
    assert_eq!(params["closing_iters"], 0);
    assert_eq!(params["dilation_iters"], 2);
    assert_eq!(report["config"]["seed"], 9);
}

#[test]
fn distinctness_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    synth(&maps, "3", "0.05", "2");
    let csv_dir = dir.path().join("csv");
    let out = lsmeval(&[
        "distinctness", "--maps", maps.to_str().unwrap(), "--subsample", "0.5", "--format", "csv", "--out",
        csv_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let intra = std::fs::read_to_string(csv_dir.join("intra_map.csv")).unwrap();
    assert_eq!(intra.lines().count(), 1 + 6);
    let pairs = std::fs::read_to_string(csv_dir.join("inter_map_pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 9);
}

#[test]
fn regrid_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "0.05", "1");
    let coarse = dir.path().join("coarse.bin");
    let out = lsmeval(&[
        "regrid", "--in", dir.path().join("synth-s3.lsm").to_str().unwrap(), "--res", "0.04", "--out",
        coarse.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let native = std::fs::metadata(dir.path().join("synth-s3.lsm")).unwrap().len();
    assert!(std::fs::metadata(&coarse).unwrap().len() < native);

    let out = lsmeval(&[
        "sweep", "--maps", dir.path().to_str().unwrap(), "--lexicon", dir.path().join("lexicon.json").to_str().unwrap(),
        "--resolutions", "0.02,0.04,0.08",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let bytes: Vec<u64> = report["sweep"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["footprint_bytes"].as_u64().unwrap())
        .collect();
    assert_eq!(bytes[0], native);
    assert!(bytes.windows(2).all(|w| w[0] > w[1]));
}

#[test]
fn exit_codes() {
    assert_eq!(lsmeval(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lsmeval(&["queryability", "--maps", "x"]).status.code(), Some(1));
    assert_eq!(lsmeval(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = lsmeval(&["distinctness", "--maps", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.lsm"), b"NOPE").unwrap();
    let out = lsmeval(&["distinctness", "--maps", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));

    // A single class of identical embeddings has zero map-wide deviation.
    let flat = dir.path().join("flat");
    synth(&flat, "1", "0", "1");
    let out = lsmeval(&["distinctness", "--maps", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let out = lsmeval(&[
        "sweep", "--maps", flat.to_str().unwrap(), "--lexicon", flat.join("lexicon.json").to_str().unwrap(),
        "--resolutions", "0.02,0.05",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn workers_do_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3", "0.1", "2");
    let run = |w: &str| {
        lsmeval(&["distinctness", "--maps", dir.path().to_str().unwrap(), "--seed", "4", "--workers", w]).stdout
    };
    assert_eq!(run("1"), run("8"));
}
