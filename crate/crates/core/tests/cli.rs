use std::path::Path;
use std::process::{Command, Output};

fn safety(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safety")).args(args).output().expect("spawn CLI")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn estimate_on_a_hand_checked_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let radii: String = std::iter::once("step,radius\n".to_string())
        .chain((1..=9).map(|i| format!("{i},{}\n", i as f64 / 10.0)))
        .collect();
    let path = write(dir.path(), "r.csv", &radii);
    // C_n = 0.8687/3, threshold 0.45 - 0.2896 = 0.1604; c/9 < 0.1604 allows one radius above delta.
    let out = safety(&["estimate", &path, "--alpha", "0.45", "--cn-method", "asymptotic"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["delta"].as_f64(), Some(0.8));
    assert_eq!(v["count_above"].as_u64(), Some(1));
    assert_eq!(v["feasible"].as_bool(), Some(true));
}

#[test]
fn infeasible_estimate_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "r.csv", "step,radius\n1,0.5\n");
    let out = safety(&["estimate", &path, "--alpha", "0.1", "--cn-method", "asymptotic"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["min_n"].as_u64(), Some(76));
    assert!(v["delta"].is_null());
}

#[test]
fn validation_errors_exit_one() {
    assert_eq!(safety(&["coverage"]).status.code(), Some(1));
    assert_eq!(safety(&["estimate", "/no/such/file.csv", "--alpha", "0.1"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[scenario]\nhorizn = 3\n");
    let out = safety(&["coverage", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn simulate_then_radii_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let json = dir.path().join("trace.json");
    let out = safety(&[
        "simulate", "--horizon", "12", "--particles", "300", "--seed", "7", "--csv", csv.to_str().unwrap(), "--json", json.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(&csv).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("step,diameter_analytic,diameter_particle,radius_true,radius_recovered"));
    assert_eq!(lines.count(), 13);

    let from_json = safety(&["radii", json.to_str().unwrap()]);
    let from_csv = safety(&["radii", csv.to_str().unwrap()]);
    assert_eq!(from_json.status.code(), Some(0));
    let parse = |s: &str| -> Vec<f64> { s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect() };
    let (a, b) = (parse(&stdout(&from_json)), parse(&stdout(&from_csv)));
    assert_eq!(a.len(), 12);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    // Radii feed straight into the estimator.
    let radii = write(dir.path(), "radii.csv", &stdout(&from_json));
    let est = safety(&["estimate", &radii, "--alpha", "0.5", "--cn-method", "dkw-bound"]);
    assert!(matches!(est.status.code(), Some(0) | Some(2)));
}

#[test]
fn coverage_init_prints_a_parseable_scenario() {
    let out = safety(&["coverage", "--init"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = safety_areas::harness::config::ScenarioConfig::from_toml_str(&stdout(&out)).unwrap();
    assert_eq!(cfg, Default::default());
}

#[test]
fn coverage_writes_to_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "s.toml",
        &format!(
            "[scenario]\nhorizon = 50\nreplications = 20\noutput_dir = {:?}\n[estimator]\nalpha = 0.3\ncn_method = \"asymptotic\"\n",
            out_dir.to_str().unwrap()
        ),
    );
    let out = safety(&["coverage", "--config", &cfg, "--timings"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("coverage_report.json")).unwrap()).unwrap();
    assert_eq!(report["m"].as_u64(), Some(20));
    assert_eq!(report["per_rep"].as_array().unwrap().len(), 20);
    assert!(report["timings"].is_object());
}

#[test]
fn kolmogorov_table() {
    let out = safety(&["dist", "--kolmogorov", "--p", "0.95", "--x", "1.3581"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let q: f64 = text.lines().find(|l| l.starts_with("0.95,")).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((q - 1.3581).abs() < 1e-3);
    assert!(text.contains("x,K(x)"));
}

#[test]
fn seed_controls_output() {
    let a = safety(&["simulate", "--horizon", "5", "--particles", "100", "--seed", "1"]);
    let b = safety(&["simulate", "--horizon", "5", "--particles", "100", "--seed", "2"]);
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(a.stdout, safety(&["simulate", "--horizon", "5", "--particles", "100", "--seed", "1"]).stdout);
}
