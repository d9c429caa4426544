use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tapbound"))
}

#[test]
fn entropy_suite_exits_zero_and_writes_reports() {
    let out = std::env::temp_dir().join(format!("tapbound-cli-{}", std::process::id()));
    let st = bin().args(["verify-entropy", "--seed", "5", "--out"]).arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let stdout = String::from_utf8_lossy(&st.stdout);
    assert!(stdout.contains("criterion 10 entropy-lemmas: PASS"), "{stdout}");
    for f in ["report.json", "rows.csv", "timing.txt"] {
        assert!(out.join("entropy-lemmas").join(f).exists(), "{f} missing");
    }
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn tap_max_writes_trace_and_plot() {
    let out = std::env::temp_dir().join(format!("tapbound-tap-{}", std::process::id()));
    let st = bin().args(["tap-max", "--out"]).arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let trace = std::fs::read_to_string(out.join("tap-max/trace.csv")).unwrap();
    assert!(trace.starts_with("start,iteration,value,grad_norm,step"));
    assert!(out.join("tap-max/radial.svg").exists());
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn bad_config_exits_with_error() {
    let dir = std::env::temp_dir().join(format!("tapbound-badcfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.cfg");
    std::fs::write(&path, "experiment = cover-property\nepsilon = 0.9\n").unwrap();
    let st = bin().arg("verify-cover").arg("--config").arg(&path).arg("--out").arg(&dir).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("epsilon"));
    let _ = std::fs::remove_dir_all(&dir);
}
