//! End-to-end tests of the compiled binary: a full round trip driven by a
//! JSON configuration, byte-level determinism of repeated inversions, and
//! the process exit codes for bad invocations.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tensortom"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Single gentle bump: fast to project and accurate to invert at n=97.
fn write_spec(dir: &Path) -> String {
    let spec = serde_json::json!({
        "kind": "incompressible",
        "bumps": [{"cx": 0.0, "cy": 0.1, "r": 0.7, "amp": 1.0}],
        "r_max": 0.85,
    });
    let path = dir.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn write_config(dir: &Path, spec: &str, out: &Path) -> String {
    let cfg = serde_json::json!({
        "phantom_spec": spec,
        "output": out.to_string_lossy(),
        "mu": 1.0,
        "grid_n": 97,
        "n_modes": 16,
        "n_beta": 256,
        "n_phi": 128,
        "class": "incompressible",
    });
    let path = dir.join("run.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn roundtrip_config_run_and_deterministic_reinversion() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out_dir = dir.path().join("run");
    let cfg = write_config(dir.path(), &spec, &out_dir);

    let out = run(&["--config", &cfg, "roundtrip"]);
    assert_eq!(code(&out), 0, "roundtrip failed: {}", stdout(&out));
    for name in [
        "phantom.ttgrid",
        "phantom.csv",
        "sinogram.csv",
        "reconstruction.ttgrid",
        "reconstruction.csv",
        "report.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["class"], "incompressible");
    assert_eq!(report["grid_n"], 97);
    // Plumbing check, looser than the library accuracy tests.
    let l2 = report["errors"]["l2"]["aggregate"].as_f64().unwrap();
    assert!(l2 < 0.08, "round-trip aggregate L2 error {l2}");
    let f2c = report["f2_consistency"].as_f64().unwrap();
    assert!(f2c < 0.05, "order-2 mode consistency {f2c}");

    // Re-invert the same sinogram twice with a pinned thread count: the
    // written grid and report must match byte for byte.
    let sino = out_dir.join("sinogram.csv");
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let redo = dir.path().join(sub);
        let out = run(&[
            "--config",
            &cfg,
            "--output",
            redo.to_str().unwrap(),
            "--threads",
            "2",
            "invert",
            "--sinogram",
            sino.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "invert failed: {}", stdout(&out));
        bytes.push((
            std::fs::read(redo.join("reconstruction.ttgrid")).unwrap(),
            std::fs::read(redo.join("report.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0].0, bytes[1].0, "reconstructions differ");
    assert_eq!(bytes[0].1, bytes[1].1, "reports differ");
}

#[test]
fn exit_codes_from_the_process() {
    let dir = tempfile::tempdir().unwrap();
    let out_arg = dir.path().join("out");
    let out = out_arg.to_str().unwrap();

    assert_eq!(code(&run(&["--help"])), 0);

    // Missing input file: code 2.
    let missing = dir.path().join("nope.ttgrid");
    let r = run(&["--output", out, "forward", "--tensor", missing.to_str().unwrap()]);
    assert_eq!(code(&r), 2);

    // Wrong magic: code 2.
    let junk = dir.path().join("junk.ttgrid");
    std::fs::write(&junk, b"payload without the grid magic").unwrap();
    let r = run(&["--output", out, "forward", "--tensor", junk.to_str().unwrap()]);
    assert_eq!(code(&r), 2);

    // Even grid size: configuration error, code 3.
    let r = run(&["--output", out, "--grid-n", "64", "phantom"]);
    assert_eq!(code(&r), 3);

    // Unknown tensor class: code 3.
    let r = run(&["--output", out, "--class", "elastic", "phantom"]);
    assert_eq!(code(&r), 3);

    // Unknown flag: usage error, code 2.
    let r = run(&["--definitely-not-a-flag", "phantom"]);
    assert_eq!(code(&r), 2);
}
