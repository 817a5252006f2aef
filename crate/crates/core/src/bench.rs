//! Batch experiments: seeded scenario ladders, a resumable record store,
//! and table/histogram reports.
//!
//! A store directory holds `config.json` (the batch that produced it) and
//! `records.jsonl`, one [`RunRecord`] per line. Records are appended as they
//! finish, so an interrupted batch resumes by skipping keys already present.
//!
//! Compute time is the wall clock around the whole `plan` / `plan_baseline`
//! call, model construction included and scenario generation excluded.

use crate::dynamics::ModelKind;
use crate::planner::{plan, plan_baseline, PlanOptions, PlanReport};
use crate::scenario::{fnv1a64, generate_scenario, splitmix64, GenerationRequest, Scenario};
use crate::transcription::Margins;
use crate::nlp_solver::SolverOptions;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Instant;

pub const CONFIG_FILE: &str = "config.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const HISTOGRAM_CSV: &str = "active_histogram.csv";
pub const INSTANCES_JSONL: &str = "instances.jsonl";
pub const NOTES_FILE: &str = "report_notes.txt";

pub const DEFAULT_LADDER: [usize; 13] = [5, 10, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plan,
    Baseline,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Plan => "plan",
            Method::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub model: ModelKind,
    pub ladder: Vec<usize>,
    pub scenarios_per_rung: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    /// Seconds per NLP solve; ignored when `solver.deterministic` is set.
    pub per_solve_limit: f64,
    pub n_intervals: usize,
    pub dt_max: f64,
    pub margins: Margins,
    pub solver: SolverOptions,
    pub workers: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::PointMass2d,
            ladder: DEFAULT_LADDER.to_vec(),
            scenarios_per_rung: 20,
            base_seed: 0,
            methods: vec![Method::Plan, Method::Baseline],
            per_solve_limit: 300.0,
            n_intervals: 100,
            dt_max: 0.05,
            margins: Margins::default(),
            solver: SolverOptions::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid batch config: {0}")]
    Config(String),
    #[error("store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("store {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("store {0} was written by a different batch config")]
    ConfigMismatch(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl BatchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.ladder.is_empty() {
            return fail("ladder is empty");
        }
        if self.scenarios_per_rung == 0 {
            return fail("scenarios_per_rung must be at least 1");
        }
        if self.methods.is_empty() {
            return fail("no methods selected");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        if !(self.per_solve_limit > 0.0) {
            return fail("per_solve_limit must be positive");
        }
        if self.n_intervals == 0 || !(self.dt_max > 0.0) {
            return fail("n_intervals and dt_max must be positive");
        }
        self.plan_options().solver.validate().map_err(BenchError::Config)
    }

    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            n_intervals: self.n_intervals,
            dt_max: self.dt_max,
            margins: self.margins,
            solver: SolverOptions {
                wall_clock_limit: self.per_solve_limit,
                ..self.solver
            },
            ..PlanOptions::default()
        }
    }

    /// Every (rung, index, method) key in run order.
    pub fn keys(&self) -> Vec<RecordKey> {
        let mut keys = Vec::new();
        for &n_obs in &self.ladder {
            for index in 0..self.scenarios_per_rung {
                for &method in &self.methods {
                    keys.push(RecordKey { n_obs, index, method });
                }
            }
        }
        keys
    }

    pub fn scenario(&self, n_obs: usize, index: usize) -> Result<Scenario, String> {
        let mut req = GenerationRequest::new(scenario_seed(self.base_seed, n_obs, index), self.model, n_obs);
        req.epsilon = self.margins.epsilon;
        generate_scenario(&req).map_err(|e| e.to_string())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `base ⊕ hash(rung, index)`, shared by every method.
pub fn scenario_seed(base_seed: u64, n_obs: usize, index: usize) -> u64 {
    let mut bytes = [0u8; 16];
    bytes[..8].copy_from_slice(&(n_obs as u64).to_le_bytes());
    bytes[8..].copy_from_slice(&(index as u64).to_le_bytes());
    let mut h = fnv1a64(&bytes);
    base_seed ^ splitmix64(&mut h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub n_obs: usize,
    pub index: usize,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// Converged but rejected by validation.
    Anomaly,
    Failed,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: RecordKey,
    pub seed: u64,
    pub scenario_hash: String,
    pub outcome: Outcome,
    /// Wall time around the whole method call (s).
    pub wall_time: f64,
    pub error: Option<String>,
    pub report: Option<PlanReport>,
}

impl RunRecord {
    pub fn success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    pub fn t_f(&self) -> Option<f64> {
        self.report.as_ref().and_then(|r| r.t_f())
    }

    pub fn active_count(&self) -> Option<usize> {
        self.report.as_ref().map(|r| r.final_active_count())
    }

    pub fn status(&self) -> &str {
        match (&self.report, self.outcome) {
            (_, Outcome::Error) => "error",
            (Some(r), _) => r.failure.map_or("converged", |s| s.as_str()),
            (None, _) => "error",
        }
    }
}

/// Runs one method on one scenario; failures become data.
pub fn run_one(key: RecordKey, seed: u64, scenario: &Scenario, opts: &PlanOptions) -> RunRecord {
    let model = scenario.model.default_model();
    let start = Instant::now();
    let result = match key.method {
        Method::Plan => plan(scenario, &model, opts),
        Method::Baseline => plan_baseline(scenario, &model, opts),
    };
    let wall_time = start.elapsed().as_secs_f64();
    let scenario_hash = scenario.fingerprint();
    match result {
        Ok(report) => {
            let valid = report.validation.as_ref().is_some_and(|v| v.node_wise_ok());
            let outcome = match (report.solved, valid) {
                (true, true) => Outcome::Success,
                (true, false) => Outcome::Anomaly,
                _ => Outcome::Failed,
            };
            RunRecord {
                key,
                seed,
                scenario_hash,
                outcome,
                wall_time,
                error: None,
                report: Some(report),
            }
        }
        Err(e) => RunRecord {
            key,
            seed,
            scenario_hash,
            outcome: Outcome::Error,
            wall_time,
            error: Some(e.to_string()),
            report: None,
        },
    }
}

fn error_record(key: RecordKey, seed: u64, message: String) -> RunRecord {
    RunRecord {
        key,
        seed,
        scenario_hash: String::new(),
        outcome: Outcome::Error,
        wall_time: 0.0,
        error: Some(message),
        report: None,
    }
}

/// Reads every complete record. A torn final line (crash mid-write) is cut off.
pub fn load_records(dir: impl AsRef<Path>) -> Result<Vec<RunRecord>, BenchError> {
    let path = dir.as_ref().join(RECORDS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    repair_tail(&path)?;
    let file = File::open(&path).map_err(io_err(&path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| BenchError::Corrupt {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

fn repair_tail(path: &Path) -> Result<(), BenchError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    f.set_len(keep as u64).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchOutcome {
    pub skipped: usize,
    pub ran: usize,
    /// Set when the stop flag cut the batch short.
    pub interrupted: bool,
}

/// Runs every missing record of the batch into `dir`.
///
/// `stop` is polled between records; in-flight records still finish.
pub fn run_batch(config: &BatchConfig, dir: impl AsRef<Path>, stop: Option<&AtomicBool>) -> Result<BatchOutcome, BenchError> {
    config.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join(CONFIG_FILE);
    if cfg_path.exists() {
        let text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
        let stored: BatchConfig = serde_json::from_str(&text).map_err(|e| BenchError::Corrupt {
            path: cfg_path.clone(),
            line: 1,
            message: e.to_string(),
        })?;
        if !same_work(&stored, config) {
            return Err(BenchError::ConfigMismatch(dir.to_path_buf()));
        }
    } else {
        let text = serde_json::to_string_pretty(config).expect("config serializes");
        fs::write(&cfg_path, text + "\n").map_err(io_err(&cfg_path))?;
    }

    let done: BTreeSet<RecordKey> = load_records(dir)?.into_iter().map(|r| r.key).collect();
    let todo: Vec<RecordKey> = config.keys().into_iter().filter(|k| !done.contains(k)).collect();
    let rec_path = dir.join(RECORDS_FILE);
    let file = OpenOptions::new().create(true).append(true).open(&rec_path).map_err(io_err(&rec_path))?;
    let writer = Mutex::new(file);
    let opts = config.plan_options();
    let next = AtomicUsize::new(0);
    let ran = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<io::Error>();

    std::thread::scope(|s| {
        for _ in 0..config.workers.min(todo.len().max(1)) {
            let tx = tx.clone();
            let (todo, writer, opts, next, ran) = (&todo, &writer, &opts, &next, &ran);
            s.spawn(move || loop {
                if stop.is_some_and(|f| f.load(Ordering::Relaxed)) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&key) = todo.get(i) else { break };
                let seed = scenario_seed(config.base_seed, key.n_obs, key.index);
                let record = match config.scenario(key.n_obs, key.index) {
                    Ok(scenario) => run_one(key, seed, &scenario, opts),
                    Err(e) => error_record(key, seed, e),
                };
                let mut line = serde_json::to_string(&record).expect("record serializes");
                line.push('\n');
                let mut f = writer.lock().unwrap_or_else(|p| p.into_inner());
                if let Err(e) = f.write_all(line.as_bytes()).and_then(|_| f.flush()) {
                    let _ = tx.send(e);
                    break;
                }
                ran.fetch_add(1, Ordering::Relaxed);
            });
        }
    });
    drop(tx);
    if let Ok(e) = rx.try_recv() {
        return Err(BenchError::Io { path: rec_path, source: e });
    }
    let ran = ran.into_inner();
    Ok(BatchOutcome {
        skipped: done.len(),
        ran,
        interrupted: ran < todo.len(),
    })
}

/// Configs that would produce the same records (worker count aside).
fn same_work(a: &BatchConfig, b: &BatchConfig) -> bool {
    BatchConfig { workers: 1, ..a.clone() } == BatchConfig { workers: 1, ..b.clone() }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActiveStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_obs: usize,
    pub method: Method,
    pub runs: usize,
    pub successes: usize,
    pub anomalies: usize,
    pub errors: usize,
    /// Over successes only.
    pub ctime: Option<Stat>,
    pub t_f: Option<Stat>,
    pub success_pct: f64,
    /// Iterative method only.
    pub active: Option<ActiveStats>,
}

fn grouped(records: &[RunRecord]) -> BTreeMap<(usize, Method), Vec<&RunRecord>> {
    let mut groups: BTreeMap<(usize, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.key.n_obs, r.key.method)).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|r| r.key.index);
    }
    groups
}

fn active_of(records: &[&RunRecord]) -> Option<ActiveStats> {
    let counts: Vec<usize> = records.iter().filter(|r| r.success()).filter_map(|r| r.active_count()).collect();
    if counts.is_empty() {
        return None;
    }
    Some(ActiveStats {
        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        min: *counts.iter().min().unwrap(),
        max: *counts.iter().max().unwrap(),
    })
}

/// One row per (rung, method), rungs ascending, plan before baseline.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    grouped(records)
        .into_iter()
        .map(|((n_obs, method), rs)| {
            let ok: Vec<&&RunRecord> = rs.iter().filter(|r| r.success()).collect();
            let ctimes: Vec<f64> = ok.iter().map(|r| r.wall_time).collect();
            let tfs: Vec<f64> = ok.iter().filter_map(|r| r.t_f()).collect();
            SummaryRow {
                n_obs,
                method,
                runs: rs.len(),
                successes: ok.len(),
                anomalies: rs.iter().filter(|r| r.outcome == Outcome::Anomaly).count(),
                errors: rs.iter().filter(|r| r.outcome == Outcome::Error).count(),
                ctime: Stat::of(&ctimes),
                t_f: Stat::of(&tfs),
                success_pct: 100.0 * ok.len() as f64 / rs.len() as f64,
                active: if method == Method::Plan { active_of(&rs) } else { None },
            }
        })
        .collect()
}

/// Final active-set statistics of the iterative method per rung, over successes.
pub fn active_stats(records: &[RunRecord]) -> BTreeMap<usize, ActiveStats> {
    grouped(records)
        .into_iter()
        .filter(|((_, m), _)| *m == Method::Plan)
        .filter_map(|((n, _), rs)| active_of(&rs).map(|s| (n, s)))
        .collect()
}

/// Per rung, `counts[k]` = successful iterative runs ending with k active obstacles.
pub fn active_distribution(records: &[RunRecord]) -> BTreeMap<usize, Vec<usize>> {
    let mut hist: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.key.method == Method::Plan && r.success()) {
        let Some(k) = r.active_count() else { continue };
        let counts = hist.entry(r.key.n_obs).or_default();
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// With timing off, compute-time columns are left empty and per-instance
    /// lines omit wall times, so repeated batches give identical bytes.
    pub timing: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { timing: true }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow], opts: ReportOptions) -> String {
    let mut out = String::from("n_obs,method,ctime_mean,ctime_std,tf_mean,tf_std,success_pct,active_mean,active_min,active_max\n");
    for r in rows {
        let ct = if opts.timing { r.ctime } else { None };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.2},{},{},{}",
            r.n_obs,
            r.method,
            cell(ct.map(|s| s.mean)),
            cell(ct.map(|s| s.std)),
            cell(r.t_f.map(|s| s.mean)),
            cell(r.t_f.map(|s| s.std)),
            r.success_pct,
            cell(r.active.map(|a| a.mean)),
            r.active.map(|a| a.min.to_string()).unwrap_or_default(),
            r.active.map(|a| a.max.to_string()).unwrap_or_default(),
        );
    }
    out
}

pub fn histogram_csv(hist: &BTreeMap<usize, Vec<usize>>) -> String {
    let mut out = String::from("n_obs,active_count,instances,fraction\n");
    for (n_obs, counts) in hist {
        let total: usize = counts.iter().sum();
        for (k, c) in counts.iter().enumerate() {
            let _ = writeln!(out, "{n_obs},{k},{c},{:.2}", *c as f64 / total as f64);
        }
    }
    out
}

#[derive(Serialize)]
struct InstanceLine<'a> {
    n_obs: usize,
    index: usize,
    method: Method,
    seed: u64,
    scenario_hash: &'a str,
    outcome: Outcome,
    status: &'a str,
    t_f: Option<f64>,
    active: Option<&'a [usize]>,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time: Option<f64>,
    positions: Option<Vec<Vec<f64>>>,
}

pub fn instances_jsonl(records: &[RunRecord], opts: ReportOptions) -> String {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.key);
    let mut out = String::new();
    for r in sorted {
        let report = r.report.as_ref();
        let line = InstanceLine {
            n_obs: r.key.n_obs,
            index: r.key.index,
            method: r.key.method,
            seed: r.seed,
            scenario_hash: &r.scenario_hash,
            outcome: r.outcome,
            status: r.status(),
            t_f: r.t_f(),
            active: report.map(|p| p.final_active.active()),
            iterations: report.map_or(0, |p| p.iterations.len()),
            wall_time: opts.timing.then_some(r.wall_time),
            positions: report.and_then(|p| p.trajectory.as_ref()).map(|t| {
                let dim = if t.states.first().map_or(0, |s| s.len()) == ModelKind::Quadrotor3d.state_dim() { 3 } else { 2 };
                t.states.iter().map(|s| s[..dim].to_vec()).collect()
            }),
        };
        out.push_str(&serde_json::to_string(&line).expect("instance serializes"));
        out.push('\n');
    }
    out
}

fn notes(records: &[RunRecord], config: Option<&BatchConfig>, opts: ReportOptions) -> String {
    let present: BTreeSet<RecordKey> = records.iter().map(|r| r.key).collect();
    let mut out = String::new();
    let _ = writeln!(out, "records={}", records.len());
    if let Some(cfg) = config {
        let missing = cfg.keys().iter().filter(|k| !present.contains(k)).count();
        let _ = writeln!(out, "expected={}", cfg.keys().len());
        let _ = writeln!(out, "missing={missing}");
        let _ = writeln!(out, "model={}", cfg.model);
        let _ = writeln!(out, "base_seed={}", cfg.base_seed);
        let limit = if cfg.solver.deterministic { "none".to_string() } else { format!("{}", cfg.per_solve_limit) };
        let _ = writeln!(out, "per_solve_limit_s={limit}");
    }
    let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
    let _ = writeln!(out, "successes={}", count(Outcome::Success));
    let _ = writeln!(out, "failures={}", count(Outcome::Failed));
    let _ = writeln!(out, "anomalies={}", count(Outcome::Anomaly));
    let _ = writeln!(out, "errors={}", count(Outcome::Error));
    let _ = writeln!(out, "timing={}", if opts.timing { "on" } else { "off" });
    out.push_str("ctime=wall clock around the whole method call, excluding scenario generation\n");
    out.push_str("success=converged and node-wise validation clean; time limits count as failures\n");
    out
}

/// Writes the summary CSV, histogram CSV, per-instance JSON lines and notes.
pub fn export_report(
    records: &[RunRecord],
    config: Option<&BatchConfig>,
    dir: impl AsRef<Path>,
    opts: ReportOptions,
) -> Result<Vec<PathBuf>, BenchError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = [
        (SUMMARY_CSV, summary_csv(&aggregate(records), opts)),
        (HISTOGRAM_CSV, histogram_csv(&active_distribution(records))),
        (INSTANCES_JSONL, instances_jsonl(records, opts)),
        (NOTES_FILE, notes(records, config, opts)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Loads a store and writes its report next to it.
pub fn report_store(dir: impl AsRef<Path>, opts: ReportOptions) -> Result<(Vec<RunRecord>, Vec<PathBuf>), BenchError> {
    let dir = dir.as_ref();
    let cfg_path = dir.join(CONFIG_FILE);
    if !cfg_path.exists() && !dir.join(RECORDS_FILE).exists() {
        return Err(BenchError::Io {
            path: dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "no batch store here"),
        });
    }
    let config = if cfg_path.exists() { Some(BatchConfig::load(&cfg_path)?) } else { None };
    let records = load_records(dir)?;
    let files = export_report(&records, config.as_ref(), dir, opts)?;
    Ok((records, files))
}
