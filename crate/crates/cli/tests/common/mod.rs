#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn vlscore() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlscore"))
}

/// Runs the binary, panicking with its stderr on failure.
pub fn run_ok(args: &[&str]) -> Output {
    let out = vlscore().args(args).output().expect("spawn vlscore");
    assert!(
        out.status.success(),
        "vlscore {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Writes a bank from `(context, text, logprobs, is_null)` rows plus a manifest.
pub fn write_bank(
    dir: &Path,
    rows: &[(&str, &str, &[f64], bool)],
    manifest: &serde_json::Value,
) -> (PathBuf, PathBuf) {
    let scores = dir.join("scores.jsonl");
    let mut text = String::new();
    for (c, t, lp, is_null) in rows {
        let rec = serde_json::json!({
            "context_id": c, "text_id": t, "token_logprobs": lp, "is_null_context": is_null
        });
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    std::fs::write(&scores, text).unwrap();
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_string()).unwrap();
    (scores, manifest_path)
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// `vlscore synth` into `dir` with extra flags.
pub fn synth(dir: &Path, flags: &[&str]) {
    let mut args = vec!["synth", "--outdir", path_str(dir)];
    args.extend_from_slice(flags);
    run_ok(&args);
}
