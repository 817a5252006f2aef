//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p aiplan-core --test acceptance`. Criterion numbers
//! given as arguments restrict the run, e.g. `-- 1 9 10`.

mod support;

use aiplan_core::bench::{self, BatchConfig, Method, ReportOptions, RunRecord};
use aiplan_core::dynamics::{ModelKind, PointMassParams, QuadParams};
use aiplan_core::planner::{feasibility_check, plan, validate_solution, PlanOptions, ValidationSettings};
use aiplan_core::scenario::{save_scenario, Scenario, ScenarioRng};
use aiplan_core::transcription::{build_nlp, Margins};
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;
use support::*;

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn deterministic_opts() -> PlanOptions {
    let mut o = PlanOptions::default();
    o.solver.deterministic = true;
    o
}

fn batch_config(model: ModelKind, ladder: Vec<usize>, methods: Vec<Method>) -> BatchConfig {
    let mut cfg = BatchConfig {
        model,
        ladder,
        scenarios_per_rung: 20,
        methods,
        ..BatchConfig::default()
    };
    cfg.solver.deterministic = true;
    cfg
}

struct Batch {
    config: BatchConfig,
    records: Vec<RunRecord>,
    seconds: f64,
}

fn run(config: BatchConfig) -> Batch {
    let dir = tempfile::tempdir().expect("temp dir");
    let start = Instant::now();
    bench::run_batch(&config, dir.path(), None).expect("batch runs");
    let seconds = start.elapsed().as_secs_f64();
    let mut records = bench::load_records(dir.path()).expect("store loads");
    records.sort_by_key(|r| r.key);
    Batch { config, records, seconds }
}

fn point_mass_batch() -> &'static Batch {
    static B: OnceLock<Batch> = OnceLock::new();
    B.get_or_init(|| run(batch_config(ModelKind::PointMass2d, vec![20, 30, 50], vec![Method::Plan, Method::Baseline])))
}

fn quad_batch() -> &'static Batch {
    static B: OnceLock<Batch> = OnceLock::new();
    B.get_or_init(|| run(batch_config(ModelKind::Quadrotor3d, vec![5, 30], vec![Method::Plan])))
}

fn rows(records: &[RunRecord], n_obs: usize, method: Method) -> Vec<&RunRecord> {
    records.iter().filter(|r| r.key.n_obs == n_obs && r.key.method == method).collect()
}

fn success_pct(rs: &[&RunRecord]) -> f64 {
    100.0 * rs.iter().filter(|r| r.success()).count() as f64 / rs.len() as f64
}

fn obstacle_free(kind: ModelKind) -> (f64, f64, bool) {
    let scenario = Scenario::empty(kind, 0.2);
    let start = Instant::now();
    let report = checked(plan(&scenario, &kind.default_model(), &deterministic_opts()).expect("plan runs"), &scenario);
    let valid = report.validation.as_ref().is_some_and(|v| v.node_wise_ok());
    (report.t_f().unwrap_or(f64::NAN), start.elapsed().as_secs_f64(), report.solved && valid)
}

fn c1() -> Verdict {
    let (tf, secs, ok) = obstacle_free(ModelKind::PointMass2d);
    let oracle = 2.0 * (10.0f64 / PointMassParams::default().a_max).sqrt();
    ensure(ok && (1.98..=2.02).contains(&tf) && secs <= 30.0, format!("t_f={tf:.5} oracle={oracle:.5} time={secs:.2}s"))
}

fn c2() -> Verdict {
    let (tf, secs, ok) = obstacle_free(ModelKind::Quadrotor3d);
    let p = QuadParams::default();
    let twr = 4.0 * p.f_max / (p.m * 9.81);
    ensure(
        ok && (tf - 1.98).abs() <= 0.198 && secs <= 300.0,
        format!("t_f={tf:.5} target=1.98±10% time={secs:.1}s thrust_to_weight={twr:.2}"),
    )
}

fn c3() -> Verdict {
    let b = point_mass_batch();
    let mut detail = Vec::new();
    let mut ok = b.seconds <= 3600.0;
    for rung in [20, 30, 50] {
        let p = success_pct(&rows(&b.records, rung, Method::Plan));
        let q = success_pct(&rows(&b.records, rung, Method::Baseline));
        ok &= p >= q;
        if rung == 30 {
            ok &= p >= 85.0;
        }
        detail.push(format!("rung{rung} plan={p:.0}% baseline={q:.0}%"));
    }
    detail.push(format!("batch_time={:.0}s", b.seconds));
    ensure(ok, detail.join(" "))
}

/// Rung-20 instances where both methods succeeded, as (plan, baseline) pairs.
fn both_succeeded() -> Vec<(&'static RunRecord, &'static RunRecord)> {
    let b = point_mass_batch();
    let plan = rows(&b.records, 20, Method::Plan);
    let base = rows(&b.records, 20, Method::Baseline);
    plan.into_iter()
        .zip(base)
        .inspect(|(p, q)| assert_eq!(p.scenario_hash, q.scenario_hash))
        .filter(|(p, q)| p.success() && q.success())
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn c4() -> Verdict {
    let pairs = both_succeeded();
    if pairs.is_empty() {
        return Err("no instance where both methods succeeded".into());
    }
    let p = mean(pairs.iter().map(|(a, _)| a.wall_time));
    let q = mean(pairs.iter().map(|(_, b)| b.wall_time));
    ensure(p <= 0.5 * q, format!("n={} plan={p:.3}s baseline={q:.3}s ratio={:.2}", pairs.len(), q / p))
}

fn c5() -> Verdict {
    let pairs = both_succeeded();
    if pairs.is_empty() {
        return Err("no instance where both methods succeeded".into());
    }
    let p = mean(pairs.iter().map(|(a, _)| a.t_f().unwrap()));
    let q = mean(pairs.iter().map(|(_, b)| b.t_f().unwrap()));
    ensure(p <= q + 0.02, format!("n={} plan_tf={p:.4} baseline_tf={q:.4}", pairs.len()))
}

fn c6() -> Verdict {
    let b = quad_batch();
    let active = |rung| -> Vec<usize> {
        rows(&b.records, rung, Method::Plan)
            .into_iter()
            .filter(|r| r.success())
            .map(|r| r.active_count().unwrap())
            .collect()
    };
    let a30 = active(30);
    let a5 = active(5);
    if a30.is_empty() || a5.is_empty() {
        return Err(format!("solved: rung30={} rung5={}", a30.len(), a5.len()));
    }
    let mean30 = a30.iter().sum::<usize>() as f64 / a30.len() as f64;
    let max30 = *a30.iter().max().unwrap();
    let zero5 = 100.0 * a5.iter().filter(|&&k| k == 0).count() as f64 / a5.len() as f64;
    ensure(
        mean30 <= 5.0 && max30 <= 10 && zero5 >= 60.0,
        format!(
            "rung30 solved={}/20 mean={mean30:.2} max={max30} | rung5 solved={}/20 zero_active={zero5:.0}% | batch_time={:.0}s",
            a30.len(),
            a5.len(),
            b.seconds
        ),
    )
}

fn all_records() -> Vec<(&'static BatchConfig, &'static RunRecord)> {
    let mut out = Vec::new();
    for b in [point_mass_batch(), quad_batch()] {
        out.extend(b.records.iter().map(|r| (&b.config, r)));
    }
    out
}

fn c7() -> Verdict {
    let mut runs = 0;
    let mut violations = Vec::new();
    for (_, r) in all_records() {
        if let Some(report) = &r.report {
            runs += 1;
            if let Err(e) = report.check_invariants(r.key.n_obs) {
                violations.push(format!("{:?}: {e}", r.key));
            }
            if r.key.method == Method::Baseline && report.iterations.len() != 1 {
                violations.push(format!("{:?}: baseline with {} iterations", r.key, report.iterations.len()));
            }
        }
    }
    ensure(
        violations.is_empty(),
        format!("runs={runs} violations={} {}", violations.len(), violations.join("; ")),
    )
}

fn c8() -> Verdict {
    let mut audited = 0;
    let mut anomalies = Vec::new();
    for (cfg, r) in all_records() {
        let Some(traj) = r.report.as_ref().filter(|p| p.solved).and_then(|p| p.trajectory.as_ref()) else {
            continue;
        };
        audited += 1;
        let scenario = cfg.scenario(r.key.n_obs, r.key.index).expect("scenario regenerates");
        let settings = ValidationSettings {
            margins: Margins { epsilon: scenario.epsilon, ..cfg.margins },
            dt_max: cfg.dt_max,
            dense_samples: 0,
        };
        let v = validate_solution(traj, &scenario, &scenario.model.default_model(), &settings);
        if !v.node_wise_ok() || !r.success() {
            anomalies.push(format!("{:?}", r.key));
        }
    }
    ensure(anomalies.is_empty(), format!("audited={audited} anomalies={} {}", anomalies.len(), anomalies.join(" ")))
}

fn c9() -> Verdict {
    let mut rng = ScenarioRng::new(9);
    let mut boundary_hits = 0;
    for case in 0..1000 {
        let (states, obstacles, inactive, eps) = random_feasibility_case(&mut rng);
        let got = feasibility_check(&states, &obstacles, &inactive, eps);
        let want = brute_force_feasibility(&states, &obstacles, &inactive, eps);
        if got != want {
            return Err(format!("case {case}: got {got:?}, oracle {want:?}"));
        }
        boundary_hits += states
            .iter()
            .filter(|x| inactive.iter().any(|&j| obstacles[j].distance_xy(x) == obstacles[j].radius + eps))
            .count();
    }
    ensure(boundary_hits > 0, format!("cases=1000 exact_boundary_nodes={boundary_hits}"))
}

fn c10() -> Verdict {
    let mut rng = ScenarioRng::new(10);
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in [ModelKind::PointMass2d, ModelKind::Quadrotor3d] {
        let model = kind.default_model();
        let mut worst_step: f64 = 0.0;
        for _ in 0..100 {
            let (x, u, dt) = random_stage(&model, &mut rng);
            worst_step = worst_step.max(rk4_jacobian_error(&model, &x, &u, dt));
        }
        let mut scenario = Scenario::empty(kind, 0.2);
        scenario.obstacles = (0..3)
            .map(|k| aiplan_core::transcription::Obstacle {
                center: [2.0 + 3.0 * k as f64, 5.0],
                radius: 0.15,
            })
            .collect();
        let mut problem = build_nlp(&model, &scenario, &[0, 1, 2], 8, 0.05, &Margins::default()).expect("problem builds");
        if kind == ModelKind::Quadrotor3d {
            problem = problem.with_quaternion_norm_rows();
        }
        let mut worst_nlp: f64 = 0.0;
        for _ in 0..100 {
            let z = random_point(&problem, 0.05, &mut rng);
            worst_nlp = worst_nlp.max(transcription_jacobian_error(&problem, &z));
        }
        ok &= worst_step <= 1e-5 && worst_nlp <= 1e-5;
        detail.push(format!("{kind}: step_jac={worst_step:.1e} nlp_jac={worst_nlp:.1e}"));
    }
    let ratio = rk4_order_ratio(0.02);
    ok &= (12.0..=20.0).contains(&ratio);
    let mut worst_mix: f64 = 0.0;
    for _ in 0..100 {
        let f: [f64; 4] = std::array::from_fn(|_| rng.uniform(0.0, 7.0));
        let g: [f64; 4] = std::array::from_fn(|_| rng.uniform(0.0, 7.0));
        worst_mix = worst_mix.max(mix_linearity_error(f, g, rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)));
    }
    ok &= worst_mix <= 1e-14;
    detail.push(format!("rk4_ratio={ratio:.2} mix_linearity={worst_mix:.1e}"));
    ensure(ok, detail.join(" "))
}

fn read_dir_bytes(dir: &Path, names: &[&str]) -> BTreeMap<String, Vec<u8>> {
    names.iter().map(|n| (n.to_string(), std::fs::read(dir.join(n)).expect("report file"))).collect()
}

fn c11() -> Verdict {
    let mut cfg = BatchConfig {
        ladder: vec![5, 10],
        scenarios_per_rung: 3,
        base_seed: 11,
        ..BatchConfig::default()
    };
    cfg.solver.deterministic = true;
    let files = [bench::SUMMARY_CSV, bench::HISTOGRAM_CSV, bench::INSTANCES_JSONL, bench::NOTES_FILE];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().expect("temp dir");
        bench::run_batch(&cfg, dir.path(), None).expect("batch runs");
        bench::report_store(dir.path(), ReportOptions { timing: false }).expect("report");
        let mut scen = Vec::new();
        for key in cfg.keys() {
            let path = dir.path().join(format!("s{}-{}.json", key.n_obs, key.index));
            save_scenario(&cfg.scenario(key.n_obs, key.index).unwrap(), &path).unwrap();
            scen.push(std::fs::read(&path).unwrap());
        }
        runs.push((scen, read_dir_bytes(dir.path(), &files)));
    }
    let same_scenarios = runs[0].0 == runs[1].0;
    let same_reports = runs[0].1 == runs[1].1;
    ensure(
        same_scenarios && same_reports,
        format!("scenarios_identical={same_scenarios} reports_identical={same_reports} records={}", cfg.keys().len()),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "point-mass obstacle-free optimum", c1),
        (2, "quadrotor obstacle-free optimum", c2),
        (3, "success-rate ordering", c3),
        (4, "compute-time ordering", c4),
        (5, "final-time ordering", c5),
        (6, "active-set economy", c6),
        (7, "termination and monotonicity", c7),
        (8, "soundness audit", c8),
        (9, "feasibility oracle equivalence", c9),
        (10, "numerical foundations", c10),
        (11, "determinism", c11),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, detail) = match verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
