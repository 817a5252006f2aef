//! Iterative active/inactive obstacle planning.
//!
//! [`plan`] starts with every obstacle inactive, solves the time-optimal
//! problem, checks the solution node by node against the inactive obstacles
//! and promotes the ones it hits, until a solution clears everything.
//! [`plan_baseline`] solves once with every obstacle active.
//! [`validate_solution`] audits a trajectory without using solver internals.

use crate::dynamics::{rk4_step, Model};
use crate::nlp_solver::{solve, SolveResult, SolveStatus, SolverOptions};
use crate::scenario::{Scenario, ScenarioError};
use crate::transcription::{build_nlp, detour_guess, initial_guess, NlpProblem, Margins, Obstacle, Trajectory, TranscriptionError};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// JSON has no literal for non-finite numbers; these are written as the
/// strings `"inf"`, `"-inf"` and `"nan"`.
mod lossless_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            v if v.is_finite() => s.serialize_f64(v),
            v if v.is_nan() => s.serialize_str("nan"),
            v if v > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(de::Error::invalid_value(de::Unexpected::Str(&t), &"a number, \"inf\", \"-inf\" or \"nan\"")),
            },
        }
    }
}

/// Partition of the obstacle indices into active and inactive sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    active: Vec<usize>,
    inactive: Vec<usize>,
}

impl ActiveSet {
    pub fn all_inactive(n_obs: usize) -> Self {
        Self {
            active: Vec::new(),
            inactive: (0..n_obs).collect(),
        }
    }

    pub fn all_active(n_obs: usize) -> Self {
        Self {
            active: (0..n_obs).collect(),
            inactive: Vec::new(),
        }
    }

    /// Active indices in promotion order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn inactive(&self) -> &[usize] {
        &self.inactive
    }

    /// Moves `indices` from the inactive to the active set. Indices that are
    /// not currently inactive are ignored.
    pub fn promote(&mut self, indices: &[usize]) {
        for &j in indices {
            if let Some(pos) = self.inactive.iter().position(|k| *k == j) {
                self.inactive.remove(pos);
                self.active.push(j);
            }
        }
    }

    /// Disjoint sets whose union is `0..n_obs`.
    pub fn is_partition_of(&self, n_obs: usize) -> bool {
        let mut seen = vec![false; n_obs];
        for &j in self.active.iter().chain(&self.inactive) {
            if j >= n_obs || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        seen.iter().all(|s| *s)
    }
}

/// Node-wise collision check of `states` against the `inactive` obstacles.
///
/// A node at distance `≤ r + epsilon` (x-y only) violates the obstacle.
/// Violated obstacles are returned once each, in the order first met when
/// scanning nodes, and obstacles within a node, in order.
pub fn feasibility_check(states: &[Vec<f64>], obstacles: &[Obstacle], inactive: &[usize], epsilon: f64) -> (bool, Vec<usize>) {
    let mut collected: Vec<usize> = Vec::new();
    for x in states {
        for &j in inactive {
            let o = &obstacles[j];
            if o.distance_xy(&x[..2]) <= o.radius + epsilon && !collected.contains(&j) {
                collected.push(j);
            }
        }
    }
    (collected.is_empty(), collected)
}

/// Everything of a [`SolveResult`] except the vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    #[serde(with = "lossless_f64")]
    pub t_f: f64,
    #[serde(with = "lossless_f64")]
    pub max_eq_residual: f64,
    #[serde(with = "lossless_f64")]
    pub max_ineq_violation: f64,
    #[serde(with = "lossless_f64")]
    pub stationarity_residual: f64,
    #[serde(with = "lossless_f64")]
    pub complementarity: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    #[serde(with = "lossless_f64")]
    pub wall_time: f64,
}

impl From<&SolveResult> for SolveSummary {
    fn from(r: &SolveResult) -> Self {
        Self {
            status: r.status,
            t_f: r.objective,
            max_eq_residual: r.max_eq_residual,
            max_ineq_violation: r.max_ineq_violation,
            stationarity_residual: r.stationarity_residual,
            complementarity: r.complementarity,
            iterations: r.iterations,
            inner_iterations: r.inner_iterations,
            wall_time: r.wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Active obstacles in this iteration's NLP.
    pub active_count: usize,
    pub solve: SolveSummary,
    /// Obstacles promoted after this iteration (empty on the last one).
    pub promoted: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub solved: bool,
    pub trajectory: Option<Trajectory>,
    pub iterations: Vec<IterationRecord>,
    /// Seconds around the whole call, all solves and checks included.
    pub wall_time: f64,
    pub final_active: ActiveSet,
    /// Set when the plan stopped on a failed solve.
    pub failure: Option<SolveStatus>,
    /// Audit of the returned trajectory.
    pub validation: Option<ValidationReport>,
}

impl PlanReport {
    pub fn t_f(&self) -> Option<f64> {
        self.trajectory.as_ref().map(|t| t.t_f)
    }

    pub fn final_active_count(&self) -> usize {
        self.final_active.active().len()
    }

    /// Termination bound, strictly growing active sets, disjoint promotions
    /// and the partition invariant. Returns the first violation found.
    pub fn check_invariants(&self, n_obs: usize) -> Result<(), String> {
        if self.iterations.is_empty() {
            return Err("no iterations recorded".into());
        }
        if self.iterations.len() > n_obs + 1 {
            return Err(format!("{} iterations exceed n_obs + 1 = {}", self.iterations.len(), n_obs + 1));
        }
        for w in self.iterations.windows(2) {
            if w[1].active_count <= w[0].active_count {
                return Err(format!("active count did not grow: {} then {}", w[0].active_count, w[1].active_count));
            }
            if w[1].active_count != w[0].active_count + w[0].promoted.len() {
                return Err("active count does not match the promotions".into());
            }
        }
        let mut seen = vec![false; n_obs];
        for rec in &self.iterations {
            for &j in &rec.promoted {
                if j >= n_obs || seen[j] {
                    return Err(format!("obstacle {j} promoted twice or out of range"));
                }
                seen[j] = true;
            }
        }
        if !self.final_active.is_partition_of(n_obs) {
            return Err("final active/inactive sets are not a partition".into());
        }
        if self.solved && self.trajectory.is_none() {
            return Err("solved without a trajectory".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    pub n_intervals: usize,
    pub dt_max: f64,
    /// The clearance pad is taken from the scenario, not from here.
    pub margins: Margins,
    pub solver: SolverOptions,
    /// Start each iteration from the previous solution.
    pub warm_start: bool,
    /// Promote only the first violated obstacle per iteration.
    pub promote_one: bool,
    /// Add the dense-sample clearance audit to the validation.
    pub dense_validation: bool,
    /// Retry a failed solve from a guess pushed out of the active obstacles.
    pub detour_retry: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            n_intervals: 100,
            dt_max: 0.05,
            margins: Margins::default(),
            solver: SolverOptions::default(),
            warm_start: true,
            promote_one: false,
            dense_validation: false,
            detour_retry: true,
        }
    }
}

impl PlanOptions {
    fn margins_for(&self, scenario: &Scenario) -> Margins {
        Margins {
            epsilon: scenario.epsilon,
            ..self.margins
        }
    }

    fn validation(&self, scenario: &Scenario) -> ValidationSettings {
        ValidationSettings {
            margins: self.margins_for(scenario),
            dt_max: self.dt_max,
            dense_samples: if self.dense_validation { DENSE_SAMPLES } else { 0 },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("scenario is for {scenario:?}, model is {model:?}")]
    ModelMismatch {
        scenario: crate::dynamics::ModelKind,
        model: crate::dynamics::ModelKind,
    },
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error("invalid solver options: {0}")]
    SolverOptions(String),
}

fn check_inputs(scenario: &Scenario, model: &Model, opts: &PlanOptions) -> Result<(), PlanError> {
    scenario.validate()?;
    if scenario.model != model.kind() {
        return Err(PlanError::ModelMismatch {
            scenario: scenario.model,
            model: model.kind(),
        });
    }
    opts.solver.validate().map_err(PlanError::SolverOptions)
}

/// Solves from `z0`; on failure, once more from `z0` with its nodes moved
/// out of the active obstacles. Guesses that cut straight through an
/// obstacle's center give the clearance rows a zero gradient there.
fn solve_with_fallback(problem: &NlpProblem, mut z0: Vec<f64>, opts: &PlanOptions) -> SolveResult {
    let first = solve(problem, &z0, &opts.solver);
    if first.status == SolveStatus::Converged || first.status == SolveStatus::TimeLimit || !opts.detour_retry {
        return first;
    }
    detour_guess(problem, &mut z0);
    let mut second = solve(problem, &z0, &opts.solver);
    second.inner_iterations += first.inner_iterations;
    second.wall_time += first.wall_time;
    second
}

/// The iterative active-set planner.
pub fn plan(scenario: &Scenario, model: &Model, opts: &PlanOptions) -> Result<PlanReport, PlanError> {
    check_inputs(scenario, model, opts)?;
    let start = Instant::now();
    let n_obs = scenario.obstacles.len();
    let margins = opts.margins_for(scenario);
    let mut set = ActiveSet::all_inactive(n_obs);
    let mut iterations = Vec::new();
    let mut previous: Option<Trajectory> = None;
    let mut trajectory = None;
    let mut failure = None;
    for _ in 0..=n_obs {
        let problem = build_nlp(model, scenario, set.active(), opts.n_intervals, opts.dt_max, &margins)?;
        let warm = if opts.warm_start { previous.as_ref() } else { None };
        let z0 = initial_guess(&problem, warm)?;
        let result = solve_with_fallback(&problem, z0, opts);
        let mut record = IterationRecord {
            active_count: set.active().len(),
            solve: SolveSummary::from(&result),
            promoted: Vec::new(),
        };
        if result.status != SolveStatus::Converged {
            failure = Some(result.status);
            iterations.push(record);
            break;
        }
        let candidate = problem.decode(&result.z_final)?;
        let (feasible, violated) = feasibility_check(&candidate.states, &scenario.obstacles, set.inactive(), scenario.epsilon);
        if feasible {
            iterations.push(record);
            trajectory = Some(candidate);
            break;
        }
        record.promoted = if opts.promote_one { violated[..1].to_vec() } else { violated };
        set.promote(&record.promoted);
        iterations.push(record);
        previous = Some(candidate);
    }
    Ok(finish(scenario, model, opts, start, set, iterations, trajectory, failure))
}

/// Single solve with every obstacle active.
pub fn plan_baseline(scenario: &Scenario, model: &Model, opts: &PlanOptions) -> Result<PlanReport, PlanError> {
    check_inputs(scenario, model, opts)?;
    let start = Instant::now();
    let set = ActiveSet::all_active(scenario.obstacles.len());
    let margins = opts.margins_for(scenario);
    let problem = build_nlp(model, scenario, set.active(), opts.n_intervals, opts.dt_max, &margins)?;
    let z0 = initial_guess(&problem, None)?;
    let result = solve_with_fallback(&problem, z0, opts);
    let record = IterationRecord {
        active_count: set.active().len(),
        solve: SolveSummary::from(&result),
        promoted: Vec::new(),
    };
    let (trajectory, failure) = if result.status == SolveStatus::Converged {
        (Some(problem.decode(&result.z_final)?), None)
    } else {
        (None, Some(result.status))
    };
    Ok(finish(scenario, model, opts, start, set, vec![record], trajectory, failure))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    scenario: &Scenario,
    model: &Model,
    opts: &PlanOptions,
    start: Instant,
    final_active: ActiveSet,
    iterations: Vec<IterationRecord>,
    trajectory: Option<Trajectory>,
    failure: Option<SolveStatus>,
) -> PlanReport {
    let validation = trajectory
        .as_ref()
        .map(|t| validate_solution(t, scenario, model, &opts.validation(scenario)));
    PlanReport {
        solved: trajectory.is_some(),
        trajectory,
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
        final_active,
        failure,
        validation,
    }
}

/// Interpolated points per segment in the dense clearance audit.
pub const DENSE_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationSettings {
    pub margins: Margins,
    pub dt_max: f64,
    /// Interior points checked per segment; 0 turns the dense audit off.
    pub dense_samples: usize,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            margins: Margins::default(),
            dt_max: 0.05,
            dense_samples: 0,
        }
    }
}

/// One audited category: pass flag, worst value found and where.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    #[serde(with = "lossless_f64")]
    pub worst: f64,
    pub node: Option<usize>,
}

impl Check {
    fn start() -> Self {
        Self {
            passed: true,
            worst: 0.0,
            node: None,
        }
    }

    fn failed() -> Self {
        Self {
            passed: false,
            worst: f64::INFINITY,
            node: None,
        }
    }

    /// Records `value` at `node`, failing when it exceeds `tol` (or is NaN).
    fn record(&mut self, value: f64, node: usize, tol: f64) {
        if value > self.worst || value.is_nan() {
            self.worst = value;
            self.node = Some(node);
        }
        if !(value <= tol) {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearanceViolation {
    /// Node index; for dense samples the segment's first node.
    pub node: usize,
    /// Sample position within the segment, 0 for nodes.
    pub fraction: f64,
    pub obstacle: usize,
    #[serde(with = "lossless_f64")]
    pub distance: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearanceCheck {
    pub passed: bool,
    /// Smallest `distance − (r + ε)` over all points and obstacles.
    #[serde(with = "lossless_f64")]
    pub min_margin: f64,
    pub violations: Vec<ClearanceViolation>,
}

impl ClearanceCheck {
    fn new() -> Self {
        Self {
            passed: true,
            min_margin: f64::INFINITY,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, node: usize, fraction: f64, p: &[f64], obstacles: &[Obstacle], epsilon: f64) {
        for (j, o) in obstacles.iter().enumerate() {
            let distance = o.distance_xy(p);
            let required = o.radius + epsilon;
            self.min_margin = self.min_margin.min(distance - required);
            if !(distance > required) {
                self.passed = false;
                self.violations.push(ClearanceViolation {
                    node,
                    fraction,
                    obstacle: j,
                    distance,
                    required,
                });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Node and input counts and dimensions agree with the model.
    pub shape: bool,
    /// `‖x_{i+1} − rk4_step(x_i, u_i, dt)‖∞`
    pub defects: Check,
    pub boundary: Check,
    /// Input and state box violations.
    pub bounds: Check,
    /// `dt − dt_max`, allowed up to the bound tolerance.
    pub time_step: Check,
    pub clearance: ClearanceCheck,
    pub dense: Option<ClearanceCheck>,
}

impl ValidationReport {
    /// Every category except the dense audit.
    pub fn node_wise_ok(&self) -> bool {
        self.shape && self.defects.passed && self.boundary.passed && self.bounds.passed && self.time_step.passed && self.clearance.passed
    }

    pub fn all_ok(&self) -> bool {
        self.node_wise_ok() && self.dense.as_ref().is_none_or(|d| d.passed)
    }
}

/// Audits `traj` against the scenario from scratch: dynamics by [`rk4_step`],
/// boundary states, boxes, time step, and clearance (`> r + ε`, with the
/// scenario's `ε`) against all obstacles.
pub fn validate_solution(traj: &Trajectory, scenario: &Scenario, model: &Model, settings: &ValidationSettings) -> ValidationReport {
    let nx = model.state_dim();
    let nu = model.input_dim();
    let n = traj.inputs.len();
    let shape = n > 0
        && traj.states.len() == n + 1
        && traj.states.iter().all(|x| x.len() == nx)
        && traj.inputs.iter().all(|u| u.len() == nu)
        && scenario.x_initial.len() == nx
        && scenario.x_final.len() == nx
        && scenario.model == model.kind()
        && traj.t_f.is_finite();
    if !shape {
        return ValidationReport {
            shape,
            defects: Check::failed(),
            boundary: Check::failed(),
            bounds: Check::failed(),
            time_step: Check::failed(),
            clearance: ClearanceCheck {
                passed: false,
                min_margin: f64::NEG_INFINITY,
                violations: Vec::new(),
            },
            dense: None,
        };
    }
    let m = &settings.margins;
    let dt = traj.dt();

    let mut defects = Check::start();
    for i in 0..n {
        let next = rk4_step(model, &traj.states[i], &traj.inputs[i], dt);
        let err = next.iter().zip(&traj.states[i + 1]).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        defects.record(err, i, m.defect_tol);
    }

    let mut boundary = Check::start();
    for (node, x, target) in [(0, &traj.states[0], &scenario.x_initial), (n, &traj.states[n], &scenario.x_final)] {
        let err = x.iter().zip(target).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        boundary.record(err, node, m.boundary_tol);
    }

    let mut bounds = Check::start();
    let (u_lo, u_hi) = model.input_bounds();
    for (i, u) in traj.inputs.iter().enumerate() {
        for v in u {
            bounds.record((u_lo - v).max(v - u_hi).max(0.0), i, m.bound_tol);
        }
    }
    let state_bounds = model.state_bounds();
    for (i, x) in traj.states.iter().enumerate() {
        for (v, (lo, hi)) in x.iter().zip(&state_bounds) {
            bounds.record((lo - v).max(v - hi).max(0.0), i, m.bound_tol);
        }
    }

    let mut time_step = Check::start();
    time_step.record((dt - settings.dt_max).max(0.0), 0, m.bound_tol);
    if !(dt > 0.0) {
        time_step.passed = false;
    }

    let mut clearance = ClearanceCheck::new();
    for (i, x) in traj.states.iter().enumerate() {
        clearance.record(i, 0.0, &x[..2], &scenario.obstacles, scenario.epsilon);
    }

    let dense = (settings.dense_samples > 0).then(|| {
        let mut c = ClearanceCheck::new();
        let k = settings.dense_samples;
        for i in 0..n {
            let (a, b) = (&traj.states[i], &traj.states[i + 1]);
            for s in 1..=k {
                let t = s as f64 / (k + 1) as f64;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                c.record(i, t, &p, &scenario.obstacles, scenario.epsilon);
            }
        }
        c
    });

    ValidationReport {
        shape,
        defects,
        boundary,
        bounds,
        time_step,
        clearance,
        dense,
    }
}
