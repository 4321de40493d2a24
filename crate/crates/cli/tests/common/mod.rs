#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};

use ambidec::decoder_file::{DecoderFile, Provenance, TOOL_NAME, TOOL_VERSION};
use ambidec_core::baseline::ImaginaryPolicy;
use ambidec_core::optimize::{CoverageConfig, TermWeights, TwoBandDecoder};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/arrays").join(name)
}

/// Empty scratch directory for one test.
pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn s(p: &Path) -> String {
    p.display().to_string()
}

/// Runs the command line in process and returns the exit code.
pub fn run(args: &[&str]) -> i32 {
    let mut full = vec!["ambidec"];
    full.extend_from_slice(args);
    ambidec::run(full)
}

/// Runs the built binary and returns the exit code.
pub fn run_binary(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_ambidec"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

/// Home-dome designs shared between tests, keyed by signal set.
pub fn dome_design(set: &str) -> PathBuf {
    static DONE: OnceLock<Mutex<Vec<String>>> = OnceLock::new();
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("designs");
    let out = dir.join(format!("homedome-{set}.json"));
    let done = DONE.get_or_init(|| Mutex::new(Vec::new()));
    let mut done = done.lock().unwrap_or_else(|e| e.into_inner());
    if !done.iter().any(|d| d == set) {
        let code = run(&["design", "--array", &s(&fixture("homedome.json")), "--set", set, "--out", &s(&out)]);
        assert_eq!(code, 0, "design {set}");
        done.push(set.to_string());
    }
    out
}

pub fn provenance(label: &str) -> Provenance {
    Provenance {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        seed: 0,
        grid: "none".into(),
        goal_grid: "none".into(),
        x0: label.into(),
        bound: 4.0,
        hf_weights: TermWeights::default(),
        lf_weights: TermWeights::default(),
        coverage: CoverageConfig::default(),
        imaginary_policy: ImaginaryPolicy::Nadir,
        hf_stage: None,
        lf_stage: None,
    }
}

/// Writes a decoder file holding `dec` in both bands.
pub fn write_single_band(path: &Path, dec: &ambidec_core::baseline::DecoderMatrix, label: &str) {
    let pair = TwoBandDecoder::new(dec.clone(), dec.clone(), 400.0).unwrap();
    DecoderFile::from_decoder(&pair, provenance(label)).write(path).unwrap();
}
