//! Black-box checks of the `waveguide` binary: exit codes, output files,
//! and the no-partial-output contract on bad input.

use std::path::Path;
use std::process::{Command, Output};

use waveguide::scenario::preset_scenarios;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_waveguide"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

/// A config cheap enough for the unoptimized binary: the stock geometry
/// with a single-cell search region around the source.
fn tiny_config() -> String {
    let mut sc = preset_scenarios("example3", false, 1).unwrap().remove(0);
    sc.label = "tiny".into();
    sc.receivers.truncate(2);
    sc.region.lo = [16.0, 16.0, 23.0];
    sc.region.hi = [20.0, 20.0, 27.0];
    sc.region.levels = 1;
    sc.to_text()
}

#[test]
fn run_requires_exactly_one_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run"], dir.path());
    assert!(!out.status.success());
    let out = bin(&["run", "missing.cfg", "--preset", "example1"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn malformed_config_fails_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "waveguide {\n  h = oops\n}\n").unwrap();
    let out = bin(&["run", "bad.cfg", "--out", "results"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
    assert!(!dir.path().join("results").exists(), "no files on parse failure");
}

#[test]
fn run_writes_the_full_output_set() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), tiny_config()).unwrap();
    let out = bin(&["run", "tiny.cfg", "--out", "results"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in
        ["tiny.manifest.txt", "tiny.scatter.txt", "tiny.scatter.csv", "tiny.locate.txt", "tiny.levels.csv"]
    {
        let path = dir.path().join("results").join(name);
        assert!(path.exists(), "{name} missing");
    }
    let manifest =
        std::fs::read_to_string(dir.path().join("results/tiny.manifest.txt")).unwrap();
    assert!(manifest.starts_with("waveguide {"));
    // --seed overrides the config seed in the written manifest
    let out = bin(&["run", "tiny.cfg", "--seed", "9", "--out", "r2"], dir.path());
    assert!(out.status.success());
    let manifest = std::fs::read_to_string(dir.path().join("r2/tiny.manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 9"));
}

#[test]
fn modes_and_field_export_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), tiny_config()).unwrap();

    let out = bin(&["modes", "tiny.cfg", "--out", "m"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("m/tiny.modes.csv")).unwrap();
    assert!(table.starts_with("n,re_xi,im_xi,re_wn,im_wn,norm"));
    assert!(table.lines().count() > 8, "expected a populated mode table");
    assert!(dir.path().join("m/tiny.mode_profiles.csv").exists());

    let out = bin(&["field", "tiny.cfg", "--plane", "y=18", "--out", "f"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("f/tiny.field.csv")).unwrap();
    assert!(csv.starts_with("u,x3,re,im,abs"));

    let out = bin(&["field", "tiny.cfg", "--plane", "z=18"], dir.path());
    assert!(!out.status.success());
}
