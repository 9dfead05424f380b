//! Exit codes and output surfaces of the `kardiex` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn kardiex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kardiex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_fixture(dir: &Path, platform: &str) {
    let out = kardiex(&["gen-fixture", dir.to_str().unwrap(), "--platform", platform]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn scan_detects_each_platform() {
    let dir = TempDir::new().unwrap();
    gen_fixture(dir.path(), "android");
    let out = kardiex(&["scan", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("android: data/data/com.alivecor.aliveecg"));
}

#[test]
fn scan_reports_both_layouts_in_one_dump() {
    let dir = TempDir::new().unwrap();
    gen_fixture(dir.path(), "both");
    let out = kardiex(&["scan", dir.path().to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let detected = value["detected"].as_array().unwrap();
    assert_eq!(detected.len(), 2);
}

#[test]
fn scan_empty_dir_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = kardiex(&["scan", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn extract_missing_input_exits_4() {
    let out = kardiex(&["extract", "/nonexistent/dump/path"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn extract_empty_dir_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = kardiex(&["extract", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_error_exits_2() {
    let out = kardiex(&["no-such-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
    let out = kardiex(&["extract"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_spec_exits_2_with_line_anchor() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, "seed = \"not a number\"\n[[ecg]\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = kardiex(&[
        "gen-fixture",
        out_dir.to_str().unwrap(),
        "--spec",
        spec.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line"), "no line anchor in: {stderr}");
}

#[test]
fn extract_report_then_verify_ok() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("dump");
    gen_fixture(&dump, "android");
    let report = dir.path().join("report.json");
    let out = kardiex(&[
        "extract",
        dump.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--pin-time",
        "2026-08-11T00:00:00Z",
        "--paranoid",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = kardiex(&["verify", report.to_str().unwrap(), dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
}

#[test]
fn verify_detects_flipped_byte_and_missing_file() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("dump");
    gen_fixture(&dump, "android");
    let report = dir.path().join("report.json");
    let out = kardiex(&[
        "extract",
        dump.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));

    // Flip one byte in one evidence file.
    let victim = walk_first_atc(&dump);
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xFF;
    std::fs::write(&victim, bytes).unwrap();
    // And remove another file entirely.
    let profile = dump.join("data/data/com.alivecor.aliveecg/shared_prefs/userprofile.xml");
    std::fs::remove_file(&profile).unwrap();

    let out = kardiex(&["verify", report.to_str().unwrap(), dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mismatch"));
    assert!(stdout.contains("absent"));
    assert!(stdout.contains("userprofile.xml"));
}

fn walk_first_atc(dump: &Path) -> std::path::PathBuf {
    let dir = dump.join("data/data/com.alivecor.aliveecg/files/ecgs");
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.into_iter().next().unwrap()
}

#[test]
fn extract_csv_is_one_row_per_event() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("dump");
    gen_fixture(&dump, "android");
    let out = kardiex(&[
        "extract",
        dump.to_str().unwrap(),
        "--format",
        "csv",
        "--pin-time",
        "2026-08-11T00:00:00Z",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "utc,local,kind,subject,payload,provenance_item,provenance_field"
    );
    // 11 recordings + 2 orders + 2 bp + 1 weight + 3 prefs + first-used = 20.
    assert_eq!(lines.count(), 20);
}

#[test]
fn timeline_subcommand_defaults_to_csv() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("dump");
    gen_fixture(&dump, "ios");
    let out = kardiex(&["timeline", dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("utc,local,kind"));
}

#[test]
fn gen_fixture_refuses_nonempty_out_dir() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("file"), b"x").unwrap();
    let out = kardiex(&["gen-fixture", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_fixture_mutate_applies() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("dump");
    let out = kardiex(&[
        "gen-fixture",
        dump.to_str().unwrap(),
        "--platform",
        "android",
        "--mutate",
        "clock-skew",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skewed header clock"));

    // Extraction must surface the mapped warning in the JSON report.
    let out = kardiex(&[
        "extract",
        dump.to_str().unwrap(),
        "--pin-time",
        "2026-08-11T00:00:00Z",
    ]);
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let warnings = value["cases"][0]["warnings"].as_array().unwrap();
    assert!(warnings
        .iter()
        .any(|w| w["code"].as_str() == Some("clock_skew")));
}

#[test]
fn gen_fixture_writes_manifest() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("dump");
    let out = kardiex(&["gen-fixture", dump.to_str().unwrap(), "--platform", "ios"]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = std::fs::read_to_string(dump.join("manifest.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), manifest);
    for line in manifest.lines() {
        // digest  size  path
        let mut parts = line.splitn(3, "  ");
        let digest = parts.next().unwrap();
        assert_eq!(digest.len(), 64);
        assert!(parts.next().unwrap().parse::<u64>().is_ok());
        assert!(parts.next().is_some());
    }
}
