// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn phonolens(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonolens"))
        .arg("--cache")
        .arg(cache)
        .args(args)
        .env_remove("PHONOLENS_CACHE")
        .output()
        .expect("binary runs")
}

fn artifact_path(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    err.lines()
        .find_map(|l| l.strip_prefix("artifact: "))
        .expect("artifact line on stderr")
        .to_string()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = phonolens(dir.path(), &["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(phonolens(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(phonolens(dir.path(), &["intervene", "--c-grid", "x:y"]).status.code(), Some(2));
}

#[test]
fn reproduce_without_weights_is_gated() {
    let dir = tempfile::tempdir().unwrap();
    let out = phonolens(dir.path(), &["reproduce"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn second_run_is_a_byte_identical_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--model", "planted", "patch", "scan"];
    let first = phonolens(dir.path(), &args);
    assert!(first.status.success());
    let path = artifact_path(&first);
    let bytes = std::fs::read(&path).unwrap();
    let modified = std::fs::metadata(&path).unwrap().modified().unwrap();
    let second = phonolens(dir.path(), &args);
    assert!(second.status.success());
    assert_eq!(artifact_path(&second), path);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(std::fs::metadata(&path).unwrap().modified().unwrap(), modified);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn sequential_flag_gives_the_same_artifact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--model", "planted", "patch", "scan", "--mode", "all"];
    let par = phonolens(a.path(), &args);
    let mut seq_args = vec!["--sequential"];
    seq_args.extend(args);
    let seq = phonolens(b.path(), &seq_args);
    assert!(par.status.success() && seq.status.success());
    assert_eq!(par.stdout, seq.stdout);
}

#[test]
fn intervene_emits_one_row_per_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = phonolens(
        dir.path(),
        &["--model", "planted", "intervene", "--c-grid", "0:6:2", "--tokens", "2"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["c"], 0.0);
}
