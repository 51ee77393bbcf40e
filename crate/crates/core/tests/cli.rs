use std::path::Path;
use std::process::{Command, Output};

fn clpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clpt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn tiny_flags(out: &Path) -> Vec<String> {
    [
        "--preset", "desk", "--steps", "6", "--runs", "3", "--samples", "4", "--delta-n", "2", "--burn-in", "10",
        "--ramp-sweeps", "5", "--output-dir",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

#[test]
fn ground_states_text_and_json() {
    let o = clpt(&["ground-states"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("|<psi*|psi0>|^2 = 0.209609965679"), "{text}");
    assert!(text.contains("a2 = -0.368160355898"));

    let o = clpt(&["ground-states", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!((v["overlap"].as_f64().unwrap() - 0.20960996567935378).abs() < 1e-12);
    for state in ["initial", "target"] {
        let re = &v[state]["re"];
        assert_eq!(re[1], re[2]);
    }
    let again = serde_json::to_string(&v).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&again).unwrap(), v);
}

#[test]
fn zero_field_ground_state_is_all_up() {
    let o = clpt(&["ground-states", "--json", "--h-init", "0"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["initial"]["re"][0].as_f64().unwrap(), 1.0);
}

#[test]
fn degenerate_spectrum_is_a_runtime_failure() {
    let o = clpt(&["ground-states", "--j", "0", "--h-z", "0", "--h-init", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty_grid.toml");
    std::fs::write(&cfg, "t_grid = []\n").unwrap();
    let o = clpt(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_grid"));

    assert_eq!(clpt(&["sweep", "--preset", "desk", "--runs", "1"]).status.code(), Some(2));
    assert_eq!(clpt(&["sample", "--preset", "desk", "--duration", "1", "--sigma", "0"]).status.code(), Some(2));
    assert_eq!(clpt(&["ground-states", "--config", cfg.to_str().unwrap(), "--preset", "desk"]).status.code(), Some(2));
    assert_eq!(clpt(&["sweep", "--preset", "huge"]).status.code(), Some(2));
    assert_eq!(clpt(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"h_target": 1.5}, "sampler": {"steps": 8}}"#).unwrap();
    let o = clpt(&["config", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("h_target = 1.5"));
    assert!(text.contains("steps = 8"));
    assert!(text.contains("beta = 1000000.0"));
}

#[test]
fn evaluate_reports_infidelity_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.csv");
    std::fs::write(&file, "0,0,0,0\n0.3,-0.2,0.9,1.0\n-1.0,-0.9,0.2,-0.3\n").unwrap();
    let traj = dir.path().join("traj.csv");
    let frames = dir.path().join("frames");
    let o = clpt(&[
        "evaluate", "--protocol", file.to_str().unwrap(), "--duration", "1e-6", "--json", "--out",
        traj.to_str().unwrap(), "--frames", frames.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let first = v["data"][0]["infidelity"].as_f64().unwrap();
    assert!((first - (1.0 - 0.20960996567935378)).abs() < 1e-9);

    let csv = std::fs::read_to_string(&traj).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    assert!(lines.next().unwrap().starts_with("t,re_a1"));
    assert_eq!(lines.count(), 5);
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 3);

    // a protocol and its time-reversed negation print the same infidelity
    let mirrored = dir.path().join("m.csv");
    std::fs::write(&mirrored, "-1.0,-0.9,0.2,-0.3\n0.3,-0.2,0.9,1.0\n").unwrap();
    let a = stdout(&clpt(&["evaluate", "--protocol", mirrored.to_str().unwrap(), "--duration", "2.5"]));
    let b = stdout(&clpt(&["evaluate", "--protocol", file.to_str().unwrap(), "--duration", "2.5"]));
    let value = |s: &str, row: usize| s.lines().nth(row).unwrap().split("infidelity = ").nth(1).unwrap().split(',').next().unwrap().to_string();
    assert_eq!(value(&a, 0), value(&b, 2));
    assert_eq!(value(&a, 1), value(&b, 1));
}

#[test]
fn malformed_protocol_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let frames = dir.path().join("frames");
    for (name, body) in [
        ("ragged.csv", "0.1,0.2\n0.3\n"),
        ("text.csv", "0.1,abc\n"),
        ("bounds.csv", "0.1,1.5\n"),
        ("empty.csv", ""),
    ] {
        let file = dir.path().join(name);
        std::fs::write(&file, body).unwrap();
        let o = clpt(&[
            "evaluate", "--protocol", file.to_str().unwrap(), "--duration", "1", "--out", traj.to_str().unwrap(),
            "--frames", frames.to_str().unwrap(),
        ]);
        assert_ne!(o.status.code(), Some(0), "{name}");
        assert!(!traj.exists() && !frames.exists(), "{name}");
    }
    let o = clpt(&["evaluate", "--protocol", dir.path().join("missing.csv").to_str().unwrap(), "--duration", "1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sample_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let flags = tiny_flags(dir.path());
    let o = clpt(&with(&["sample", "--duration", "2"], &flags));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);
    let ens = dir.path().join("T_2");
    for f in ["ensemble.json", "run_000_manifest.json", "run_002_samples.csv"] {
        assert!(ens.join(f).exists(), "{f}");
    }
    let o = clpt(&with(&["analyze", "--input", ens.to_str().unwrap()], &flags));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let components: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ens.join("components.json")).unwrap()).unwrap();
    assert_eq!(components["schema_version"], 1);
    let distances = std::fs::read_to_string(ens.join("distances.csv")).unwrap();
    assert_eq!(distances.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3);

    let o = clpt(&with(&["sample", "--duration", "3"], &flags));
    assert!(o.status.success());
    let o = clpt(&with(&["analyze", "--input", dir.path().to_str().unwrap()], &flags));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("T_QSL"));
    assert!(dir.path().join("phase_diagram.json").exists());

    let o = clpt(&with(&["analyze", "--input", dir.path().join("nothing").to_str().unwrap()], &flags));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn single_beta_scan_warns_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let flags = tiny_flags(dir.path());
    let o = clpt(&with(&["beta-scan", "--duration", "2", "--betas", "1e3"], &flags));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("beta_scan.json")).unwrap()).unwrap();
    assert!(report["estimate"].is_null());
}

#[test]
fn sweep_twice_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let flags = tiny_flags(d.path());
        let o = clpt(&with(&["sweep", "--t-grid", "1,2.5"], &flags));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["phase_diagram.json", "T_1/distances.csv", "T_2.5/run_001_samples.csv", "T_2.5/histogram.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
