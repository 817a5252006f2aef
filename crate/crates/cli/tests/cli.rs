use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aiplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aiplan"))
        .args(args)
        .current_dir(dir)
        .env("AIPLAN_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing in {line}"))
}

#[test]
fn gen_is_deterministic_and_validates_arguments() {
    let d = tempfile::tempdir().unwrap();
    let a = aiplan(d.path(), &["gen", "--seed", "7", "--model", "point-mass", "--n-obs", "5", "--out", "a.json"]);
    assert_eq!(a.status.code(), Some(0));
    let b = aiplan(d.path(), &["gen", "--seed", "7", "--model", "point-mass", "--n-obs", "5", "--out", "b.json"]);
    assert_eq!(fs::read(d.path().join("a.json")).unwrap(), fs::read(d.path().join("b.json")).unwrap());
    assert_eq!(field(&stdout(&a), "scenario_hash"), field(&stdout(&b), "scenario_hash"));
    assert_eq!(aiplan(d.path(), &["gen", "--n-obs", "-1"]).status.code(), Some(2));
    assert_eq!(aiplan(d.path(), &["gen", "--bogus"]).status.code(), Some(2));
    assert_eq!(aiplan(d.path(), &["gen", "--radius-min", "0.3", "--radius-max", "0.1", "--n-obs", "2"]).status.code(), Some(2));
    // default file name lands in the output directory
    let c = aiplan(d.path(), &["gen", "--seed", "1", "--n-obs", "2", "--model", "quadrotor"]);
    assert_eq!(c.status.code(), Some(0));
    assert!(Path::new(field(&stdout(&c), "path")).exists());
}

#[test]
fn solve_and_check_round_trip() {
    let d = tempfile::tempdir().unwrap();
    aiplan(d.path(), &["gen", "--seed", "3", "--out", "free.json"]);
    let it = aiplan(d.path(), &["solve", "--scenario", "free.json", "--deterministic", "--out", "it.json"]);
    assert_eq!(it.status.code(), Some(0), "{}", String::from_utf8_lossy(&it.stderr));
    let line = stdout(&it);
    assert_eq!(line.lines().count(), 1);
    assert_eq!(field(&line, "status"), "converged");
    let tf: f64 = field(&line, "t_f").parse().unwrap();
    assert!((tf - 2.0).abs() < 1e-3);
    let base = aiplan(d.path(), &["solve", "--scenario", "free.json", "--method", "baseline", "--deterministic", "--out", "b.json"]);
    assert_eq!(field(&stdout(&base), "scenario_hash"), field(&line, "scenario_hash"));

    let ok = aiplan(d.path(), &["check", "--trajectory", "it.json", "--scenario", "free.json"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("valid=true"));

    // Move node 40 into a new obstacle placed on the path.
    let text = fs::read_to_string(d.path().join("it.json")).unwrap();
    let traj: serde_json::Value = serde_json::from_str(&text).unwrap();
    let p = &traj["states"][40];
    let (x, y) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
    let mut scen: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("free.json")).unwrap()).unwrap();
    scen["obstacles"] = serde_json::json!([{ "center": [x, y], "radius": 0.1 }]);
    fs::write(d.path().join("blocked.json"), serde_json::to_string(&scen).unwrap()).unwrap();
    let bad = aiplan(d.path(), &["check", "--trajectory", "it.json", "--scenario", "blocked.json"]);
    assert_eq!(bad.status.code(), Some(1));
    let out = stdout(&bad);
    let clearance = out.lines().find(|l| l.starts_with("check=clearance")).unwrap();
    assert_eq!(field(clearance, "obstacle"), "0");
    assert!(field(clearance, "node").parse::<usize>().is_ok());

    aiplan(d.path(), &["gen", "--seed", "3", "--model", "quadrotor", "--out", "q.json"]);
    let mismatch = aiplan(d.path(), &["check", "--trajectory", "it.json", "--scenario", "q.json"]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn solve_failure_and_bad_input_codes() {
    let d = tempfile::tempdir().unwrap();
    aiplan(d.path(), &["gen", "--seed", "3", "--n-obs", "10", "--out", "s.json"]);
    let fail = aiplan(d.path(), &["solve", "--scenario", "s.json", "--max-iter", "2"]);
    assert_eq!(fail.status.code(), Some(1));
    assert_eq!(field(&stdout(&fail), "status"), "iteration_limit");
    assert_eq!(field(&stdout(&fail), "trajectory"), "-");
    fs::write(d.path().join("junk.json"), "{not json").unwrap();
    assert_eq!(aiplan(d.path(), &["solve", "--scenario", "junk.json"]).status.code(), Some(2));
    assert_eq!(aiplan(d.path(), &["solve", "--scenario", "missing.json"]).status.code(), Some(2));
    assert_eq!(aiplan(d.path(), &["solve", "--scenario", "s.json", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_a_dry_run() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["gen", "--dry-run"],
        vec!["solve", "--scenario", "x.json", "--dry-run"],
        vec!["check", "--trajectory", "t.json", "--scenario", "x.json", "--dry-run"],
        vec!["bench", "--dry-run"],
        vec!["report", "--dry-run"],
    ] {
        let o = aiplan(d.path(), &args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        let s = stdout(&o);
        assert_eq!(s.lines().count(), 1);
        assert_eq!(field(&s, "command"), args[0]);
    }
    assert!(fs::read_dir(d.path()).unwrap().next().is_none(), "dry runs write nothing");
}

#[test]
fn bench_then_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"ladder": [5], "scenarios_per_rung": 3, "base_seed": 2, "solver": {"deterministic": true}}"#;
    fs::write(d.path().join("cfg.json"), cfg).unwrap();
    let b = aiplan(d.path(), &["bench", "--config", "cfg.json", "--out-dir", "store"]);
    assert_eq!(b.status.code(), Some(0), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(field(&stdout(&b), "ran"), "6");
    let r1 = aiplan(d.path(), &["report", "--out-dir", "store", "--no-timing"]);
    assert_eq!(r1.status.code(), Some(0));
    assert_eq!(field(&stdout(&r1), "missing"), "0");
    let csv1 = fs::read(d.path().join("store/summary.csv")).unwrap();
    let text = String::from_utf8(csv1.clone()).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("5,plan,"));
    aiplan(d.path(), &["report", "--out-dir", "store", "--no-timing"]);
    assert_eq!(fs::read(d.path().join("store/summary.csv")).unwrap(), csv1);
    assert_eq!(aiplan(d.path(), &["report", "--out-dir", "nowhere"]).status.code(), Some(1));
    fs::write(d.path().join("bad.json"), r#"{"ladder": []}"#).unwrap();
    assert_eq!(aiplan(d.path(), &["bench", "--config", "bad.json"]).status.code(), Some(2));
}
