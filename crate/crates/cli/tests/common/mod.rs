#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

/// Artifacts of the fixture pipeline that are committed under `expected/`.
pub const COMPARED: [&str; 10] = [
    "curves.csv",
    "diffusion_empirical.csv",
    "tim_kernels.csv",
    "kappa.csv",
    "dgstar.csv",
    "diffusion_constant_gap.csv",
    "diffusion_tim.csv",
    "diffusion_hdim.csv",
    "diffusion_simulated_hdim.csv",
    "comparison.json",
];

pub fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Runs the configured stages in a scratch copy of the fixture and returns
/// the scratch directory with its output directory.
pub fn run_fixture() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["config.toml", "events.csv", "kappa_true.csv"] {
        fs::copy(fixture().join(f), dir.path().join(f)).unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_impact"))
        .args(["--config", dir.path().join("config.toml").to_str().unwrap(), "run"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    (dir, out_dir)
}

/// Files under `expected/` that differ from the ones in `out`.
pub fn golden_mismatches(out: &Path) -> Vec<String> {
    let expected = fixture().join("expected");
    COMPARED
        .iter()
        .filter(|f| fs::read(out.join(f)).ok() != fs::read(expected.join(f)).ok())
        .map(|f| f.to_string())
        .collect()
}
