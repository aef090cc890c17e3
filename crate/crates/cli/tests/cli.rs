use std::process::Command;

fn bolza() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bolza"))
}

const SWAP: &str = r#"{"name": "swap", "problem": {"masses": [1, 1], "q_i": [-1, 1], "q_f": [1.2, -1.2], "T1": 0, "T2": 1},
 "minimize": {"grid_size": 48}}"#;

#[test]
fn experiment_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SWAP).unwrap();
    let out = dir.path().join("out");
    let st = bolza()
        .args(["experiment", "run", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        st.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&st.stdout)
    );
    for f in [
        "report.json",
        "report.txt",
        "path.json",
        "trace.csv",
        "min_gap.csv",
        "fits.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let st = bolza()
        .args(["surgery", "normalize", "--path"])
        .arg(out.join("path.json"))
        .arg("--out")
        .arg(dir.path().join("n.json"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
}

#[test]
fn invalid_spec_exits_two_and_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SWAP).unwrap();
    let st = bolza()
        .args(["experiment", "run", "--alpha", "2.5", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("problem.alpha"));
}

#[test]
fn certify_rejects_non_central_configuration() {
    let ok = bolza()
        .args([
            "cc",
            "certify",
            "--masses",
            "1,1",
            "--positions",
            "-0.5,0.5",
        ])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let bad = bolza()
        .args([
            "cc",
            "certify",
            "--masses",
            "1,1,1",
            "--positions",
            "-1,0.1,0.9",
        ])
        .output()
        .unwrap();
    assert_ne!(bad.status.code(), Some(0));
}
