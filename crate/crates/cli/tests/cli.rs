use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt-sca")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_prints_a_converged_trace() {
    let o = bin(&["solve", "--problem", "p1", "--method", "dc", "--seeds", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.starts_with("p1 af dc seed 3"));
    assert!(s.lines().nth(1).unwrap().trim_start().starts_with("iter"));
    assert!(s.contains("status Converged"));
}

#[test]
fn solve_writes_trace_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin(&["solve", "--problem", "p2", "--seeds", "1", "--max-iter", "5", "--out", out]);
    assert!(o.status.success());
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace_p2_gp_seed1.json")).unwrap()).unwrap();
    assert!(trace["records"].as_array().unwrap().len() <= 6);
    assert_eq!(trace["spec"]["kind"], "max_min");
}

#[test]
fn solve_rejects_several_seeds_and_bad_flags() {
    let o = bin(&["solve", "--seeds", "0..3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exactly one seed"));
    let o = bin(&["solve", "--seeds", "0", "--varsigma", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["solve", "--problem", "p4"]);
    assert!(!o.status.success());
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"system": {"p_max_dbm": 40.0}, "problem": {"kind": "max_min"}}"#).unwrap();
    let o = bin(&["solve", "--config", cfg.to_str().unwrap(), "--seeds", "0", "--max-iter", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("p2 "));

    std::fs::write(&cfg, r#"{"system": {"p_max": 40.0}}"#).unwrap();
    let o = bin(&["solve", "--config", cfg.to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baselines_table_has_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["baselines", "--seeds", "0,5", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("baselines_p1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,joint,bs_power_only,relay_power_only,split_only");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(v[1..].iter().all(|b| *b <= v[0] * (1.0 + 1e-6)));
    }
}

#[test]
fn sweep_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["sweep", "--seeds", "0", "--p-max-dbm", "35", "--epsilon", "0.3,0.5,0.7", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["convergence_p1.csv", "convergence_p2.csv", "convergence_p3.csv", "baselines.csv", "af_vs_df.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    assert!(stdout(&o).contains("df_over_af_at_35dbm"));
}

#[test]
fn selftest_passes_on_one_seed() {
    let o = bin(&["selftest", "--seeds", "2"]);
    let s = stdout(&o);
    assert!(o.status.success(), "{s}");
    assert_eq!(s.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
