use tapbound_harness::config::ExperimentConfig;
use tapbound_harness::run;

fn artifacts(name: &str, replicas: usize, dir: &std::path::Path) -> (String, String) {
    let mut c = ExperimentConfig::defaults(name).unwrap();
    c.replicas = replicas;
    c.aux_replicas = c.aux_replicas.min(2);
    c.mc_samples = c.mc_samples.min(2000);
    let report = run(&c).unwrap();
    let sub = report.write_all(dir).unwrap();
    (
        std::fs::read_to_string(sub.join("report.json")).unwrap(),
        std::fs::read_to_string(sub.join("rows.csv")).unwrap(),
    )
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let base = std::env::temp_dir().join(format!("tapbound-det-{}", std::process::id()));
    for (name, reps) in [("theorem-bound", 3), ("onsager-frequency", 4), ("gaussian-law", 600)] {
        let a = artifacts(name, reps, &base.join("a"));
        let b = artifacts(name, reps, &base.join("b"));
        assert_eq!(a, b, "{name} artifacts differ");
        assert!(!a.0.contains("seconds") && !a.0.contains("elapsed"));
    }
    let _ = std::fs::remove_dir_all(&base);
}

#[test]
fn seed_changes_rows() {
    let mut c = ExperimentConfig::defaults("theorem-bound").unwrap();
    c.replicas = 2;
    c.aux_replicas = 0;
    c.measure = tapbound_harness::config::MeasureKind::Ising;
    let a = run(&c).unwrap();
    c.seed += 1;
    let b = run(&c).unwrap();
    assert_ne!(a.rows, b.rows);
}

#[test]
fn config_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("tapbound-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("exp.cfg");
    std::fs::write(&path, "# quick run\nexperiment = zero-disorder-tightness\nn = 10\nfields = 0.2, 0.5\n").unwrap();
    let c = ExperimentConfig::load(&path).unwrap();
    let report = run(&c).unwrap();
    assert!(report.passed);
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.config["n"], "10");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut c = ExperimentConfig::defaults("cover-property").unwrap();
    c.epsilon = 0.9;
    c.eta = 1.5;
    let err = run(&c).unwrap_err().to_string();
    assert!(err.contains("eta") && err.contains("epsilon"), "{err}");
}
