use std::path::{Path, PathBuf};
use std::process::Command;

use hybridseg_cli::{cmd_ae_verify, cmd_eval, cmd_mask, cmd_segment, RunConfig};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridseg"))
}

#[test]
fn eval_of_identical_labels_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let labels = fixture("two_planes.labels");
    let out = cmd_eval(&labels, &labels, None, (None, None), &RunConfig::default(), dir.path()).unwrap();
    assert_eq!(out.summary()["seg_iou"], 1.0);
    assert!(dir.path().join("metrics.json").exists());
}

#[test]
fn segment_fixture_recovers_both_planes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.set("labels", fixture("two_planes.labels").display().to_string()).unwrap();
    let out = cmd_segment(&fixture("two_planes.xyz"), &cfg, dir.path()).unwrap();
    assert_eq!(out.summary()["K"], 2);
    assert_eq!(out.summary()["seg_iou"], 1.0);
    let m = &out.manifest;
    assert_eq!(m.inputs.len(), 2);
    assert!(m.inputs.iter().all(|d| d.sha256.len() == 64));
}

#[test]
fn ae_verify_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_ae_verify(&RunConfig::default(), dir.path()).unwrap();
    assert!(out.pass);
    assert_eq!(out.summary()["pass"], true);
}

#[test]
fn rerun_from_resolved_config_is_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.set("patches", "16").unwrap();
    cfg.set("seed", "11").unwrap();
    let first = cmd_mask(&fixture("two_planes.xyz"), &cfg, a.path()).unwrap();
    let again = RunConfig::load(&a.path().join("config.resolved")).unwrap();
    assert_eq!(again, cfg);
    let second = cmd_mask(&fixture("two_planes.xyz"), &again, b.path()).unwrap();
    let digests = |m: &hybridseg_cli::manifest::Manifest| m.outputs.iter().map(|d| d.sha256.clone()).collect::<Vec<_>>();
    assert_eq!(digests(&first.manifest), digests(&second.manifest));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let input = fixture("two_planes.xyz");
    let ok = bin()
        .args(["--out", out, "--threads", "1", "mask", "--input"])
        .arg(&input)
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    let unknown = bin().args(["--out", out, "--set", "bogus=1", "ae-verify"]).status().unwrap();
    assert_eq!(unknown.code(), Some(2));
    let missing = bin()
        .args(["--out", out, "segment", "--input", "/nonexistent/cloud.xyz"])
        .status()
        .unwrap();
    assert_eq!(missing.code(), Some(2));
    // too few points for any fit: degenerate, not an input error
    let tiny = dir.path().join("tiny.xyz");
    std::fs::write(&tiny, "0 0 0\n1 0 0\n").unwrap();
    let labels = dir.path().join("tiny.labels");
    std::fs::write(&labels, "0\n0\n").unwrap();
    let degenerate = bin()
        .args(["--out", out, "fit", "--type", "sphere", "--input"])
        .arg(&tiny)
        .arg("--labels")
        .arg(&labels)
        .status()
        .unwrap();
    assert_eq!(degenerate.code(), Some(4));
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.cfg");
    std::fs::write(&p, "seed = 3\nneighbourhood = 12\n").unwrap();
    let err = RunConfig::load(&p).unwrap_err();
    assert!(err.to_string().contains("unknown key"));
}
