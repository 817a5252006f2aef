//! `aiplan`: scenario generation, planning, validation and batch benchmarks.
//!
//! Exit codes: 0 success, 1 method or validation failure, 2 usage or input
//! error. Summary lines on stdout are single-line `key=value` pairs in a
//! fixed order.

use aiplan_core::bench::{self, BatchConfig, ReportOptions};
use aiplan_core::dynamics::ModelKind;
use aiplan_core::planner::{plan, plan_baseline, validate_solution, Check, PlanOptions, ValidationSettings, DENSE_SAMPLES};
use aiplan_core::scenario::{generate_scenario, load_scenario, load_trajectory, save_scenario, save_trajectory, GenerationRequest, Scenario};
use aiplan_core::transcription::Margins;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "AIPLAN_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "aiplan", version, about = "Time-optimal planning with iterative obstacle activation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded random scenario file.
    Gen(GenArgs),
    /// Plan a trajectory for a scenario file.
    Solve(SolveArgs),
    /// Validate a trajectory file against a scenario file.
    Check(CheckArgs),
    /// Run (or resume) a batch experiment into a store directory.
    Bench(BenchArgs),
    /// Aggregate a store directory into CSV and JSON-lines reports.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    #[value(alias = "point-mass-2d")]
    PointMass,
    #[value(alias = "quadrotor-3d")]
    Quadrotor,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::PointMass => ModelKind::PointMass2d,
            ModelArg::Quadrotor => ModelKind::Quadrotor3d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum MethodArg {
    #[value(alias = "plan")]
    Iterative,
    Baseline,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "point-mass")]
    model: ModelArg,
    #[arg(long, default_value_t = 0)]
    n_obs: usize,
    /// Clearance pad added to every radius (m).
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    radius_min: f64,
    #[arg(long, default_value_t = 0.2)]
    radius_max: f64,
    /// Output file; defaults to a name derived from the arguments.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug, Clone)]
struct TolArgs {
    /// Extra pad that closes the strict clearance inequality (m).
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, default_value_t = 1e-6)]
    defect_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    bound_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    boundary_tol: f64,
}

impl TolArgs {
    fn margins(&self, epsilon: f64) -> Margins {
        Margins {
            epsilon,
            delta: self.delta,
            defect_tol: self.defect_tol,
            bound_tol: self.bound_tol,
            boundary_tol: self.boundary_tol,
        }
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value = "iterative")]
    method: MethodArg,
    /// Number of shooting intervals.
    #[arg(long = "n", default_value_t = 100)]
    n_intervals: usize,
    #[arg(long, default_value_t = 0.05)]
    dt_max: f64,
    /// Overrides the scenario's clearance pad (m).
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long, default_value_t = 1e-6)]
    constraint_tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    stationarity_tol: f64,
    /// Newton iteration budget per NLP solve.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Wall-clock seconds per NLP solve.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Ignore the time limit so results never depend on machine speed.
    #[arg(long)]
    deterministic: bool,
    /// Disable warm starts between outer iterations.
    #[arg(long)]
    cold: bool,
    /// Also audit clearance between nodes.
    #[arg(long)]
    dense: bool,
    /// Trajectory output file; defaults to a name derived from the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    dt_max: f64,
    #[command(flatten)]
    tol: TolArgs,
    /// Also audit clearance between nodes (reported, not part of the exit code).
    #[arg(long)]
    dense: bool,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Batch config (JSON); omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Leave compute times out so repeated batches give identical files.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    dry_run: bool,
}

enum Failure {
    Method(String),
    Input(String),
}

type Outcome = Result<(), Failure>;

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Check(a) => check(a),
        Command::Bench(a) => run_bench(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Method(m)) => {
            if !m.is_empty() {
                eprintln!("aiplan: {m}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("aiplan: {m}");
            ExitCode::from(2)
        }
    }
}

fn gen(a: GenArgs) -> Outcome {
    let kind = ModelKind::from(a.model);
    let mut req = GenerationRequest::new(a.seed, kind, a.n_obs);
    req.epsilon = a.epsilon;
    req.radius_range = (a.radius_min, a.radius_max);
    let path = a.out.unwrap_or_else(|| out_dir().join(format!("scenario-{kind}-n{}-s{}.json", a.n_obs, a.seed)));
    if a.dry_run {
        println!(
            "command=gen seed={} model={kind} n_obs={} epsilon={} radius_min={} radius_max={} out={}",
            a.seed,
            a.n_obs,
            a.epsilon,
            a.radius_min,
            a.radius_max,
            path.display()
        );
        return Ok(());
    }
    let scenario = generate_scenario(&req).map_err(|e| match e {
        aiplan_core::scenario::ScenarioError::InvalidRequest(_) => input(e),
        _ => Failure::Method(e.to_string()),
    })?;
    create_parent(&path)?;
    save_scenario(&scenario, &path).map_err(|e| Failure::Method(e.to_string()))?;
    println!("path={} scenario_hash={}", path.display(), scenario.fingerprint());
    Ok(())
}

fn create_parent(path: &Path) -> Outcome {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Failure::Method(format!("{}: {e}", p.display()))),
        _ => Ok(()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn solve(a: SolveArgs) -> Outcome {
    let mut opts = PlanOptions {
        n_intervals: a.n_intervals,
        dt_max: a.dt_max,
        margins: a.tol.margins(a.epsilon.unwrap_or(0.2)),
        warm_start: !a.cold,
        dense_validation: a.dense,
        ..PlanOptions::default()
    };
    opts.solver.constraint_tol = a.constraint_tol;
    opts.solver.stationarity_tol = a.stationarity_tol;
    opts.solver.max_inner_iterations = a.max_iter;
    opts.solver.wall_clock_limit = a.time_limit;
    opts.solver.deterministic = a.deterministic;
    let method = if a.method == MethodArg::Baseline { "baseline" } else { "iterative" };
    if a.dry_run {
        println!(
            "command=solve scenario={} method={method} n={} dt_max={} epsilon={} delta={} constraint_tol={} stationarity_tol={} max_iter={} time_limit={} deterministic={} warm_start={} dense={}",
            a.scenario.display(),
            opts.n_intervals,
            opts.dt_max,
            a.epsilon.map_or_else(|| "scenario".to_string(), |e| e.to_string()),
            opts.margins.delta,
            opts.solver.constraint_tol,
            opts.solver.stationarity_tol,
            opts.solver.max_inner_iterations,
            opts.solver.wall_clock_limit,
            opts.solver.deterministic,
            opts.warm_start,
            opts.dense_validation
        );
        return Ok(());
    }
    if opts.n_intervals == 0 || !(opts.dt_max > 0.0) {
        return Err(Failure::Input("--n and --dt-max must be positive".into()));
    }
    let mut scenario: Scenario = load_scenario(&a.scenario).map_err(input)?;
    if let Some(eps) = a.epsilon {
        scenario.epsilon = eps;
    }
    let model = scenario.model.default_model();
    let report = match a.method {
        MethodArg::Iterative => plan(&scenario, &model, &opts),
        MethodArg::Baseline => plan_baseline(&scenario, &model, &opts),
    }
    .map_err(input)?;
    let valid = report.validation.as_ref().is_some_and(|v| v.node_wise_ok());
    let status = match (report.solved, valid) {
        (true, true) => "converged",
        (true, false) => "invalid",
        _ => report.failure.map_or("failed", |s| s.as_str()),
    };
    let mut path = None;
    if let Some(t) = report.trajectory.as_ref().filter(|_| report.solved) {
        let p = a.out.clone().unwrap_or_else(|| {
            let stem = a.scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            out_dir().join(format!("{stem}-{method}-trajectory.json"))
        });
        create_parent(&p)?;
        save_trajectory(t, scenario.model, &p).map_err(|e| Failure::Method(e.to_string()))?;
        path = Some(p);
    }
    println!(
        "status={status} method={method} t_f={} iterations={} active={} wall_time={:.3} scenario_hash={} trajectory={}",
        fmt_opt(report.t_f()),
        report.iterations.len(),
        report.final_active_count(),
        report.wall_time,
        scenario.fingerprint(),
        path.map_or_else(|| "-".to_string(), |p| p.display().to_string())
    );
    if report.solved && valid {
        Ok(())
    } else {
        Err(Failure::Method(String::new()))
    }
}

fn check_line(name: &str, c: &Check) -> String {
    format!(
        "check={name} passed={} worst={:.3e} node={}",
        c.passed,
        c.worst,
        c.node.map_or_else(|| "-".to_string(), |n| n.to_string())
    )
}

fn check(a: CheckArgs) -> Outcome {
    if a.dry_run {
        println!(
            "command=check trajectory={} scenario={} dt_max={} delta={} defect_tol={} bound_tol={} boundary_tol={} dense={}",
            a.trajectory.display(),
            a.scenario.display(),
            a.dt_max,
            a.tol.delta,
            a.tol.defect_tol,
            a.tol.bound_tol,
            a.tol.boundary_tol,
            a.dense
        );
        return Ok(());
    }
    let scenario = load_scenario(&a.scenario).map_err(input)?;
    let (traj, kind) = load_trajectory(&a.trajectory).map_err(input)?;
    if kind != scenario.model {
        return Err(Failure::Input(format!("trajectory is for {kind}, scenario is for {}", scenario.model)));
    }
    let settings = ValidationSettings {
        margins: a.tol.margins(scenario.epsilon),
        dt_max: a.dt_max,
        dense_samples: if a.dense { DENSE_SAMPLES } else { 0 },
    };
    let r = validate_solution(&traj, &scenario, &scenario.model.default_model(), &settings);
    println!("check=shape passed={}", r.shape);
    println!("{}", check_line("defects", &r.defects));
    println!("{}", check_line("boundary", &r.boundary));
    println!("{}", check_line("bounds", &r.bounds));
    println!("{}", check_line("time_step", &r.time_step));
    let clearance = |name: &str, c: &aiplan_core::planner::ClearanceCheck| {
        let worst = c
            .violations
            .iter()
            .min_by(|x, y| (x.distance - x.required).total_cmp(&(y.distance - y.required)));
        match worst {
            Some(v) => println!(
                "check={name} passed={} min_margin={:.3e} violations={} node={} fraction={:.2} obstacle={} distance={:.6} required={:.6}",
                c.passed,
                c.min_margin,
                c.violations.len(),
                v.node,
                v.fraction,
                v.obstacle,
                v.distance,
                v.required
            ),
            None => println!("check={name} passed={} min_margin={:.3e} violations=0", c.passed, c.min_margin),
        }
    };
    clearance("clearance", &r.clearance);
    if let Some(d) = &r.dense {
        clearance("dense", d);
    }
    println!("valid={} scenario_hash={}", r.node_wise_ok(), scenario.fingerprint());
    if r.node_wise_ok() {
        Ok(())
    } else {
        Err(Failure::Method(String::new()))
    }
}

fn run_bench(a: BenchArgs) -> Outcome {
    let mut config = match &a.config {
        Some(p) => BatchConfig::load(p).map_err(input)?,
        None => BatchConfig::default(),
    };
    if let Some(w) = a.workers {
        config.workers = w;
    }
    config.validate().map_err(input)?;
    let dir = a.out_dir.unwrap_or_else(out_dir);
    if a.dry_run {
        println!(
            "command=bench out_dir={} records={} config={}",
            dir.display(),
            config.keys().len(),
            serde_json_line(&config)
        );
        return Ok(());
    }
    let out = bench::run_batch(&config, &dir, None).map_err(|e| match e {
        bench::BenchError::Config(_) => input(e),
        _ => Failure::Method(e.to_string()),
    })?;
    println!("out_dir={} ran={} skipped={} interrupted={}", dir.display(), out.ran, out.skipped, out.interrupted);
    Ok(())
}

fn serde_json_line(config: &BatchConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

fn report(a: ReportArgs) -> Outcome {
    let dir = a.out_dir.unwrap_or_else(out_dir);
    let opts = ReportOptions { timing: !a.no_timing };
    if a.dry_run {
        println!("command=report out_dir={} timing={}", dir.display(), opts.timing);
        return Ok(());
    }
    let (records, files) = bench::report_store(&dir, opts).map_err(|e| Failure::Method(e.to_string()))?;
    let missing = std::fs::read_to_string(dir.join(bench::NOTES_FILE))
        .ok()
        .and_then(|t| t.lines().find_map(|l| l.strip_prefix("missing=").map(str::to_string)))
        .unwrap_or_else(|| "-".to_string());
    println!(
        "out_dir={} records={} missing={missing} files={}",
        dir.display(),
        records.len(),
        files.iter().filter_map(|f| f.file_name()?.to_str()).collect::<Vec<_>>().join(",")
    );
    Ok(())
}
