use aiplan_core::bench::{self, BatchConfig, Method, ReportOptions, RECORDS_FILE};
use std::fs;
use std::path::Path;

fn mini() -> BatchConfig {
    let mut c = BatchConfig {
        ladder: vec![0, 3],
        scenarios_per_rung: 2,
        base_seed: 5,
        ..BatchConfig::default()
    };
    c.solver.deterministic = true;
    c
}

fn report_bytes(dir: &Path) -> Vec<Vec<u8>> {
    bench::report_store(dir, ReportOptions { timing: false }).unwrap();
    [bench::SUMMARY_CSV, bench::HISTOGRAM_CSV, bench::INSTANCES_JSONL, bench::NOTES_FILE]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn batch_runs_resumes_and_reports() {
    let cfg = mini();
    let full = tempfile::tempdir().unwrap();
    let out = bench::run_batch(&cfg, full.path(), None).unwrap();
    assert_eq!((out.ran, out.skipped, out.interrupted), (8, 0, false));
    let records = bench::load_records(full.path()).unwrap();
    assert_eq!(records.len(), 8);
    for r in &records {
        if let Some(p) = &r.report {
            p.check_invariants(r.key.n_obs).unwrap();
        }
    }
    // both methods consume the same instance
    for k in cfg.keys().iter().filter(|k| k.method == Method::Plan) {
        let hashes: Vec<&str> = records
            .iter()
            .filter(|r| r.key.n_obs == k.n_obs && r.key.index == k.index)
            .map(|r| r.scenario_hash.as_str())
            .collect();
        assert_eq!(hashes.len(), 2);
        assert_eq!(hashes[0], hashes[1]);
    }
    let rows = bench::aggregate(&records);
    assert_eq!(rows.len(), 4);
    for row in rows.iter().filter(|r| r.n_obs == 0) {
        assert_eq!(row.success_pct, 100.0);
    }
    let reference = report_bytes(full.path());
    let csv = String::from_utf8(reference[0].clone()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(report_bytes(full.path()), reference);

    // Interrupted store: two complete records and a torn third line.
    let partial = tempfile::tempdir().unwrap();
    fs::copy(full.path().join(bench::CONFIG_FILE), partial.path().join(bench::CONFIG_FILE)).unwrap();
    let text = fs::read_to_string(full.path().join(RECORDS_FILE)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let torn = format!("{}\n{}\n{}", lines[0], lines[1], &lines[2][..lines[2].len() / 2]);
    fs::write(partial.path().join(RECORDS_FILE), torn).unwrap();
    let (present, _) = bench::report_store(partial.path(), ReportOptions { timing: false }).unwrap();
    assert_eq!(present.len(), 2);
    let notes = fs::read_to_string(partial.path().join(bench::NOTES_FILE)).unwrap();
    assert!(notes.contains("missing=6"), "{notes}");

    let out = bench::run_batch(&cfg, partial.path(), None).unwrap();
    assert_eq!((out.ran, out.skipped), (6, 2));
    assert_eq!(report_bytes(partial.path()), reference);
    let again = bench::run_batch(&cfg, partial.path(), None).unwrap();
    assert_eq!(again.ran, 0);
}

#[test]
fn store_refuses_a_different_batch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BatchConfig { ladder: vec![0], methods: vec![Method::Plan], ..mini() };
    bench::run_batch(&cfg, dir.path(), None).unwrap();
    let other = BatchConfig { base_seed: 99, ..cfg.clone() };
    assert!(matches!(bench::run_batch(&other, dir.path(), None), Err(bench::BenchError::ConfigMismatch(_))));
    let more_workers = BatchConfig { workers: 3, ..cfg };
    assert!(bench::run_batch(&more_workers, dir.path(), None).is_ok());
}

#[test]
fn stop_flag_interrupts_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let stop = std::sync::atomic::AtomicBool::new(true);
    let out = bench::run_batch(&mini(), dir.path(), Some(&stop)).unwrap();
    assert_eq!(out.ran, 0);
    assert!(out.interrupted);
    assert!(bench::load_records(dir.path()).unwrap().is_empty());
}

#[test]
fn missing_store_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bench::report_store(dir.path().join("nope"), ReportOptions::default()).is_err());
}

#[test]
fn config_file_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"model": "quadrotor-3d", "ladder": [5], "scenarios_per_rung": 3}"#).unwrap();
    let c = BatchConfig::load(&path).unwrap();
    assert_eq!(c.keys().len(), 6);
    assert_eq!(c.n_intervals, 100);
    fs::write(&path, r#"{"ladder": []}"#).unwrap();
    assert!(BatchConfig::load(&path).is_err());
}
