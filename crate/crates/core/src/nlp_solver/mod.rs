//! Local solver for smooth, sparse, nonconvex NLPs.
//!
//! Primal-dual interior-point method. Inequalities get slacks, slacks and
//! finite variable bounds get log barriers, and the barrier parameter is
//! driven to zero in a monotone sequence (the outer iterations). Each Newton
//! step condenses the inequality and bound blocks into the Hessian and
//! solves the remaining saddle-point system with a band LU (see [`kkt`]).
//! Nonconvexity is detected without inertia: a step whose tangential part
//! sees too little curvature triggers a diagonal shift of the Hessian.
//! Globalization is a filter line search on (barrier objective, infeasibility)
//! with second-order corrections and a Gauss-Newton restoration phase.

pub mod banded;
pub mod kkt;
pub mod problem;

pub use banded::BandedBordered;
use kkt::{KktFactor, KktLayout};
pub use problem::{HessianShape, SmoothNlp, SparseRows};

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub constraint_tol: f64,
    pub stationarity_tol: f64,
    /// Seconds for the whole solve, restarts included.
    pub wall_clock_limit: f64,
    pub initial_barrier: f64,
    /// Linear factor of the barrier update `μ ← min(factor·μ, μ^1.5)`.
    pub barrier_decrease: f64,
    /// Re-solves from a perturbed start after a failed solve.
    pub restarts: usize,
    pub restart_seed: u64,
    /// Without it the deadline is ignored, so results never depend on machine speed.
    pub deterministic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 10,
            max_inner_iterations: 500,
            constraint_tol: 1e-6,
            stationarity_tol: 1e-4,
            wall_clock_limit: 300.0,
            initial_barrier: 0.1,
            barrier_decrease: 0.2,
            restarts: 0,
            restart_seed: 0,
            deterministic: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("constraint_tol", self.constraint_tol),
            ("stationarity_tol", self.stationarity_tol),
            ("wall_clock_limit", self.wall_clock_limit),
            ("initial_barrier", self.initial_barrier),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err("iteration limits must be positive".into());
        }
        if !(self.barrier_decrease > 0.0 && self.barrier_decrease < 1.0) {
            return Err("barrier_decrease must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    InfeasibleStall,
    IterationLimit,
    TimeLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::InfeasibleStall => "infeasible_stall",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub z_final: Vec<f64>,
    pub objective: f64,
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    pub stationarity_residual: f64,
    pub complementarity: f64,
    /// Outer (barrier parameter) iterations.
    pub iterations: usize,
    /// Newton iterations.
    pub inner_iterations: usize,
    pub wall_time: f64,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    /// Barrier parameter of each outer iteration (non-increasing).
    pub barrier_history: Vec<f64>,
}

/// First-order optimality residuals at a primal-dual point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖z − P(z − ∇ₓL)‖∞` with `P` the projection onto the box.
    pub stationarity: f64,
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    /// `max_j |μ_j g_j|`
    pub complementarity: f64,
}

/// Infinity norms of the equality residual and of the inequality violation.
pub fn constraint_violation<P: SmoothNlp + ?Sized>(problem: &P, z: &[f64]) -> (f64, f64) {
    let mut eq = vec![0.0; problem.n_eq()];
    let mut ineq = vec![0.0; problem.n_ineq()];
    problem.constraints(z, &mut eq, &mut ineq);
    violation_norms(&eq, &ineq)
}

fn violation_norms(eq: &[f64], ineq: &[f64]) -> (f64, f64) {
    let e = eq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let i = ineq.iter().fold(0.0f64, |m, v| m.max(v.max(0.0)));
    (e, i)
}

fn projected_gradient_norm(z: &[f64], grad: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    z.iter()
        .zip(grad)
        .zip(lower.iter().zip(upper))
        .fold(0.0f64, |m, ((zi, gi), (lo, hi))| {
            let p = (zi - gi).clamp(*lo, *hi);
            m.max((p - zi).abs())
        })
}

pub fn kkt_report<P: SmoothNlp + ?Sized>(problem: &P, z: &[f64], eq_mult: &[f64], ineq_mult: &[f64]) -> KktReport {
    assert_eq!(z.len(), problem.n_vars());
    assert_eq!(eq_mult.len(), problem.n_eq());
    assert_eq!(ineq_mult.len(), problem.n_ineq());
    let mut eq = vec![0.0; problem.n_eq()];
    let mut ineq = vec![0.0; problem.n_ineq()];
    problem.constraints(z, &mut eq, &mut ineq);
    let mut jac = SparseRows::default();
    problem.constraint_jacobian(z, &mut jac);
    let mut grad = vec![0.0; problem.n_vars()];
    problem.objective_gradient(z, &mut grad);
    let mut weights = eq_mult.to_vec();
    weights.extend_from_slice(ineq_mult);
    jac.add_transpose_product(&weights, &mut grad);
    let (max_eq_residual, max_ineq_violation) = violation_norms(&eq, &ineq);
    KktReport {
        stationarity: projected_gradient_norm(z, &grad, problem.lower_bounds(), problem.upper_bounds()),
        max_eq_residual,
        max_ineq_violation,
        complementarity: ineq_mult
            .iter()
            .zip(&ineq)
            .fold(0.0f64, |m, (mu, g)| m.max((mu * g).abs())),
    }
}

/// Dual regularization of the equality block, scaled by `μ^¼`.
const EQ_REGULARIZATION: f64 = 1e-8;
const FIRST_SHIFT: f64 = 1e-4;
const MIN_SHIFT: f64 = 1e-20;
/// Minimum curvature (relative to `‖dz‖²`) of an acceptable Newton step.
const CURVATURE_TOL: f64 = 1e-10;
/// Least-squares multiplier estimates larger than this are discarded.
const MAX_INITIAL_MULTIPLIER: f64 = 1e3;
const MAX_SHIFT_ATTEMPTS: usize = 6;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const FILTER_THETA_MARGIN: f64 = 1e-5;
const FILTER_PHI_MARGIN: f64 = 1e-8;
const SWITCH_DELTA: f64 = 1.0;
const SWITCH_THETA_EXP: f64 = 1.1;
const SWITCH_PHI_EXP: f64 = 2.3;
const MIN_STEP_FACTOR: f64 = 0.05;
const MAX_SOC: usize = 4;
const RESTORATION_ITERATIONS: usize = 100;
/// Distance from the bounds of the initial point (relative).
const BOUND_PUSH: f64 = 1e-2;
const MIN_SLACK: f64 = 1e-2;
/// Bound multipliers stay within this factor of their central value.
const MULTIPLIER_SPREAD: f64 = 1e10;
/// Barrier subproblems are solved to this multiple of μ.
const BARRIER_TOL_FACTOR: f64 = 10.0;
const MAX_SHIFT: f64 = 1e40;

#[derive(Debug, Clone)]
struct Iterate {
    z: Vec<f64>,
    /// `g(z) + s = 0`, `s > 0`
    s: Vec<f64>,
    y: Vec<f64>,
    /// Inequality multipliers (≥ 0), complementary to `s`.
    v: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Direction {
    z: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    v: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

/// Values and derivatives at the current iterate.
struct Evaluation {
    f: f64,
    grad: Vec<f64>,
    eq: Vec<f64>,
    ineq: Vec<f64>,
    jac: SparseRows,
}

struct Context<'a, P: SmoothNlp + ?Sized> {
    problem: &'a P,
    lower: &'a [f64],
    upper: &'a [f64],
    has_lower: Vec<bool>,
    has_upper: Vec<bool>,
    n_eq: usize,
}

impl<'a, P: SmoothNlp + ?Sized> Context<'a, P> {
    fn new(problem: &'a P) -> Self {
        let lower = problem.lower_bounds();
        let upper = problem.upper_bounds();
        Self {
            problem,
            lower,
            upper,
            has_lower: lower.iter().map(|v| v.is_finite()).collect(),
            has_upper: upper.iter().map(|v| v.is_finite()).collect(),
            n_eq: problem.n_eq(),
        }
    }

    fn evaluate(&self, z: &[f64], out: &mut Evaluation) {
        out.f = self.problem.objective(z);
        self.problem.objective_gradient(z, &mut out.grad);
        self.problem.constraints(z, &mut out.eq, &mut out.ineq);
        self.problem.constraint_jacobian(z, &mut out.jac);
    }

    /// Barrier objective and ℓ1 infeasibility; `None` outside the interior.
    fn merit_parts(&self, z: &[f64], s: &[f64], mu: f64, eq: &mut [f64], ineq: &mut [f64]) -> Option<(f64, f64)> {
        let mut phi = self.problem.objective(z);
        for i in 0..z.len() {
            if self.has_lower[i] {
                let d = z[i] - self.lower[i];
                if !(d > 0.0) {
                    return None;
                }
                phi -= mu * d.ln();
            }
            if self.has_upper[i] {
                let d = self.upper[i] - z[i];
                if !(d > 0.0) {
                    return None;
                }
                phi -= mu * d.ln();
            }
        }
        for si in s {
            if !(*si > 0.0) {
                return None;
            }
            phi -= mu * si.ln();
        }
        self.problem.constraints(z, eq, ineq);
        let theta = eq.iter().map(|c| c.abs()).sum::<f64>() + ineq.iter().zip(s).map(|(g, si)| (g + si).abs()).sum::<f64>();
        (phi.is_finite() && theta.is_finite()).then_some((phi, theta))
    }

    /// `∇f + Jᵀ[y; v]`
    fn lagrangian_gradient(&self, ev: &Evaluation, it: &Iterate) -> Vec<f64> {
        let mut g = ev.grad.clone();
        let mut w = it.y.clone();
        w.extend_from_slice(&it.v);
        ev.jac.add_transpose_product(&w, &mut g);
        g
    }
}

/// Pairs of (infeasibility, barrier objective) that later trial points must improve on.
#[derive(Debug, Default)]
struct Filter {
    entries: Vec<(f64, f64)>,
    theta_max: Option<f64>,
    theta_min: f64,
}

impl Filter {
    fn reset(&mut self) {
        self.entries.clear();
    }

    fn initialize(&mut self, theta: f64) {
        if self.theta_max.is_none() {
            self.theta_max = Some(1e4 * theta.max(1.0));
            self.theta_min = 1e-4 * theta.max(1.0);
        }
    }

    fn switching(theta0: f64, slope: f64, alpha: f64) -> bool {
        slope < 0.0 && alpha * (-slope).powf(SWITCH_PHI_EXP) > SWITCH_DELTA * theta0.powf(SWITCH_THETA_EXP)
    }

    fn min_step(&self, theta0: f64, slope: f64) -> f64 {
        let bound = if slope < 0.0 {
            FILTER_THETA_MARGIN
                .min(FILTER_PHI_MARGIN * theta0 / -slope)
                .min(SWITCH_DELTA * theta0.powf(SWITCH_THETA_EXP) / (-slope).powf(SWITCH_PHI_EXP))
        } else {
            FILTER_THETA_MARGIN
        };
        MIN_STEP_FACTOR * bound
    }

    /// `Some(true)` for an objective-decrease step, `Some(false)` for a
    /// step accepted on the filter criterion, `None` when rejected.
    fn acceptable(&self, phi0: f64, theta0: f64, slope: f64, alpha: f64, phi: f64, theta: f64) -> Option<bool> {
        if self.theta_max.is_some_and(|m| theta > m) {
            return None;
        }
        if self.entries.iter().any(|(t, p)| theta >= *t && phi >= *p) {
            return None;
        }
        if theta0 <= self.theta_min && Self::switching(theta0, slope, alpha) {
            return (phi <= phi0 + ARMIJO * alpha * slope).then_some(true);
        }
        let better = theta <= (1.0 - FILTER_THETA_MARGIN) * theta0 || phi <= phi0 - FILTER_PHI_MARGIN * theta0;
        better.then_some(false)
    }

    fn augment(&mut self, phi0: f64, theta0: f64) {
        self.entries.push(((1.0 - FILTER_THETA_MARGIN) * theta0, phi0 - FILTER_PHI_MARGIN * theta0));
    }
}

impl Filter {
    fn blocks(&self, phi: f64, theta: f64) -> bool {
        self.theta_max.is_some_and(|m| theta > m) || self.entries.iter().any(|(t, p)| theta >= *t && phi >= *p)
    }
}

/// Gauss-Newton iterations on the constraint violation, run when the line
/// search fails. Returns once the filter accepts the iterate again.
fn restore<P: SmoothNlp + ?Sized>(
    ctx: &Context<'_, P>,
    sys: &mut NewtonSystem,
    ev: &mut Evaluation,
    it: &mut Iterate,
    mu: f64,
    filter: &Filter,
    inner: &mut usize,
) -> bool {
    let n = it.z.len();
    let zero = vec![0.0; n];
    let tau = (1.0 - mu).max(0.99);
    let proximity = mu.sqrt();
    let mut eq = vec![0.0; ctx.n_eq];
    let mut ineq = vec![0.0; it.s.len()];
    let mut theta_start = None;
    for _ in 0..RESTORATION_ITERATIONS {
        ctx.evaluate(&it.z, ev);
        let rg: Vec<f64> = ev.ineq.iter().zip(&it.s).map(|(g, s)| g + s).collect();
        let Some((phi, theta)) = ctx.merit_parts(&it.z, &it.s, mu, &mut eq, &mut ineq) else {
            return false;
        };
        let start = *theta_start.get_or_insert(theta);
        if theta_start.is_some() && theta < 0.9 * start && !filter.blocks(phi, theta) {
            it.y.fill(0.0);
            return true;
        }
        sys.assemble(ctx, ev, it, false);
        if !sys.factorize(ev, proximity, mu) {
            return false;
        }
        let d = newton_direction(ctx, sys, ev, it, &zero, mu, &ev.eq, &rg);
        let alpha_max = primal_step_limit(ctx, it, &d, tau);
        let mut alpha = alpha_max;
        loop {
            let z_t = axpy(&it.z, alpha, &d.z);
            let s_t = axpy(&it.s, alpha, &d.s);
            if let Some((_, theta_t)) = ctx.merit_parts(&z_t, &s_t, mu, &mut eq, &mut ineq) {
                if theta_t <= (1.0 - ARMIJO * alpha) * theta {
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return false;
            }
        }
        *inner += 1;
        let alpha_d = dual_step_limit(ctx, it, &d, tau);
        it.z = axpy(&it.z, alpha, &d.z);
        it.s = axpy(&it.s, alpha, &d.s);
        it.v = axpy(&it.v, alpha_d, &d.v);
        it.zl = axpy(&it.zl, alpha_d, &d.zl);
        it.zu = axpy(&it.zu, alpha_d, &d.zu);
        safeguard_multipliers(ctx, it, mu);
    }
    false
}

/// Recomputes the step with the constraint residual of the rejected trial
/// point folded in, to counter curvature of the constraints.
#[allow(clippy::too_many_arguments)]
fn second_order_correction<P: SmoothNlp + ?Sized>(
    ctx: &Context<'_, P>,
    sys: &NewtonSystem,
    ev: &Evaluation,
    it: &Iterate,
    dual_grad: &[f64],
    mu: f64,
    tau: f64,
    alpha: f64,
    rg: &[f64],
    filter: &mut Filter,
    (phi0, theta0, slope): (f64, f64, f64),
    (z_t, s_t): (&[f64], &[f64]),
) -> Option<(Direction, f64, bool)> {
    let n_eq = ctx.n_eq;
    let n_in = it.s.len();
    let mut eq = vec![0.0; n_eq];
    let mut ineq = vec![0.0; n_in];
    ctx.problem.constraints(z_t, &mut eq, &mut ineq);
    let mut rc: Vec<f64> = ev.eq.iter().zip(&eq).map(|(c, ct)| alpha * c + ct).collect();
    let mut rgs: Vec<f64> = (0..n_in).map(|k| alpha * rg[k] + ineq[k] + s_t[k]).collect();
    let mut theta_prev = f64::INFINITY;
    for _ in 0..MAX_SOC {
        let d = newton_direction(ctx, sys, ev, it, dual_grad, mu, &rc, &rgs);
        let a = primal_step_limit(ctx, it, &d, tau);
        let z_c = axpy(&it.z, a, &d.z);
        let s_c = axpy(&it.s, a, &d.s);
        let (phi, theta) = ctx.merit_parts(&z_c, &s_c, mu, &mut eq, &mut ineq)?;
        if let Some(f_type) = filter.acceptable(phi0, theta0, slope, alpha, phi, theta) {
            return Some((d, a, f_type));
        }
        if theta > 0.99 * theta_prev {
            return None;
        }
        theta_prev = theta;
        for k in 0..n_eq {
            rc[k] = a * rc[k] + eq[k];
        }
        for k in 0..n_in {
            rgs[k] = a * rgs[k] + ineq[k] + s_c[k];
        }
    }
    None
}

/// Largest step in (0, 1] keeping `x + α·dx ≥ (1 − τ)·x` for positive `x`.
fn fraction_to_boundary(x: impl Iterator<Item = (f64, f64)>, tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for (xi, di) in x {
        if di < 0.0 {
            alpha = alpha.min(-tau * xi / di);
        }
    }
    alpha
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Linear algebra state of one Newton iteration.
struct NewtonSystem {
    /// `W + Σ + Jgᵀ D Jg` (without the shift)
    hw: BandedBordered,
    kkt: KktFactor,
    shift: f64,
    last_shift: f64,
    n_eq: usize,
}

impl NewtonSystem {
    fn new(shape: HessianShape, n: usize, n_eq: usize, jac: &SparseRows) -> Self {
        let layout = KktLayout::new(n, shape.n_border, shape.bandwidth, jac, n_eq);
        Self {
            hw: BandedBordered::zeros(n - shape.n_border, shape.bandwidth, shape.n_border),
            kkt: KktFactor::new(layout),
            shift: 0.0,
            last_shift: 0.0,
            n_eq,
        }
    }

    /// Without `curvature` the Lagrangian Hessian is left out, as in the
    /// Gauss-Newton model of the restoration phase.
    fn assemble<P: SmoothNlp + ?Sized>(&mut self, ctx: &Context<'_, P>, ev: &Evaluation, it: &Iterate, curvature: bool) {
        let h = &mut self.hw;
        h.clear();
        if curvature {
            ctx.problem.add_lagrangian_hessian(&it.z, 1.0, &it.y, &it.v, h);
        }
        for i in 0..it.z.len() {
            let mut sigma = 0.0;
            if ctx.has_lower[i] {
                sigma += it.zl[i] / (it.z[i] - ctx.lower[i]);
            }
            if ctx.has_upper[i] {
                sigma += it.zu[i] / (ctx.upper[i] - it.z[i]);
            }
            if sigma != 0.0 {
                h.add(i, i, sigma);
            }
        }
        let mut d = vec![0.0; ctx.n_eq + it.s.len()];
        for (k, (vk, sk)) in it.v.iter().zip(&it.s).enumerate() {
            d[ctx.n_eq + k] = vk / sk;
        }
        ev.jac.add_gram(&d, h);
    }

    /// Factorizes the KKT matrix with primal shift `shift`, moving to the
    /// next shift while it is singular.
    fn factorize(&mut self, ev: &Evaluation, shift: f64, mu: f64) -> bool {
        self.shift = shift;
        loop {
            let delta_c = EQ_REGULARIZATION * mu.powf(0.25);
            if self.kkt.factorize(&self.hw, self.shift, &ev.jac, delta_c).is_ok() {
                if self.shift > 0.0 {
                    self.last_shift = self.shift;
                }
                return true;
            }
            if !self.raise_shift() {
                return false;
            }
        }
    }

    /// Next shift after a rejected factorization; `false` past the cap.
    fn raise_shift(&mut self) -> bool {
        self.shift = if self.shift == 0.0 {
            if self.last_shift > 0.0 {
                (self.last_shift / 3.0).max(MIN_SHIFT)
            } else {
                FIRST_SHIFT
            }
        } else if self.last_shift == 0.0 {
            self.shift * 100.0
        } else {
            self.shift * 8.0
        };
        self.shift <= MAX_SHIFT
    }

    /// Inertia-free test: the step must see positive curvature.
    fn curvature_ok(&self, dz: &[f64]) -> bool {
        let mut hx = vec![0.0; dz.len()];
        self.hw.mul_vec(dz, &mut hx);
        let dd: f64 = dz.iter().map(|v| v * v).sum();
        let curv: f64 = hx.iter().zip(dz).map(|(a, b)| a * b).sum::<f64>() + self.shift * dd;
        curv >= CURVATURE_TOL * dd
    }

    /// Solves `[Hw Jcᵀ; Jc 0] [dz; dy] = [b; −rc]`.
    fn solve_saddle(&self, b: &[f64], rc: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(rc.len(), self.n_eq);
        let neg: Vec<f64> = rc.iter().map(|c| -c).collect();
        self.kkt.solve(b, &neg)
    }
}

/// `Jg x` over the inequality rows.
fn ineq_rows_product(jac: &SparseRows, n_eq: usize, x: &[f64]) -> Vec<f64> {
    (n_eq..jac.n_rows())
        .map(|r| {
            let (cols, vals) = jac.row(r);
            cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum()
        })
        .collect()
}

/// Right-hand side of the primal block and the constant part `q` of
/// `Δv = q + D Jg Δz`.
fn primal_rhs<P: SmoothNlp + ?Sized>(
    ctx: &Context<'_, P>,
    ev: &Evaluation,
    it: &Iterate,
    dual_grad: &[f64],
    mu: f64,
    rg: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = it.z.len();
    let n_eq = ctx.n_eq;
    let m_in = it.s.len();
    let q: Vec<f64> = (0..m_in).map(|k| (mu - it.s[k] * it.v[k] + it.v[k] * rg[k]) / it.s[k]).collect();
    let mut w = vec![0.0; n_eq + m_in];
    w[n_eq..].copy_from_slice(&q);
    let mut b = vec![0.0; n];
    ev.jac.add_transpose_product(&w, &mut b);
    for i in 0..n {
        let mut r = dual_grad[i];
        if ctx.has_lower[i] {
            r -= mu / (it.z[i] - ctx.lower[i]);
        }
        if ctx.has_upper[i] {
            r += mu / (ctx.upper[i] - it.z[i]);
        }
        b[i] = -r - b[i];
    }
    (b, q)
}

/// Newton direction for barrier parameter `mu` with equality residual `rc`
/// and slack residual `rg` (both normally the current `c` and `g + s`).
#[allow(clippy::too_many_arguments)]
fn newton_direction<P: SmoothNlp + ?Sized>(
    ctx: &Context<'_, P>,
    sys: &NewtonSystem,
    ev: &Evaluation,
    it: &Iterate,
    dual_grad: &[f64],
    mu: f64,
    rc: &[f64],
    rg: &[f64],
) -> Direction {
    let n = it.z.len();
    let n_eq = ctx.n_eq;
    let m_in = it.s.len();
    let (b, q) = primal_rhs(ctx, ev, it, dual_grad, mu, rg);
    let (dz, dy) = sys.solve_saddle(&b, rc);
    let jg = ineq_rows_product(&ev.jac, n_eq, &dz);
    let ds: Vec<f64> = (0..m_in).map(|k| -rg[k] - jg[k]).collect();
    let dv: Vec<f64> = (0..m_in).map(|k| q[k] + it.v[k] / it.s[k] * jg[k]).collect();
    let mut dzl = vec![0.0; n];
    let mut dzu = vec![0.0; n];
    for i in 0..n {
        if ctx.has_lower[i] {
            let d = it.z[i] - ctx.lower[i];
            dzl[i] = mu / d - it.zl[i] - it.zl[i] / d * dz[i];
        }
        if ctx.has_upper[i] {
            let d = ctx.upper[i] - it.z[i];
            dzu[i] = mu / d - it.zu[i] + it.zu[i] / d * dz[i];
        }
    }
    Direction {
        z: dz,
        s: ds,
        y: dy,
        v: dv,
        zl: dzl,
        zu: dzu,
    }
}

fn primal_step_limit<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, it: &Iterate, d: &Direction, tau: f64) -> f64 {
    let n = it.z.len();
    let lo = fraction_to_boundary(
        (0..n).filter(|i| ctx.has_lower[*i]).map(|i| (it.z[i] - ctx.lower[i], d.z[i])),
        tau,
    );
    let hi = fraction_to_boundary(
        (0..n).filter(|i| ctx.has_upper[*i]).map(|i| (ctx.upper[i] - it.z[i], -d.z[i])),
        tau,
    );
    let sl = fraction_to_boundary(it.s.iter().copied().zip(d.s.iter().copied()), tau);
    lo.min(hi).min(sl)
}

fn dual_step_limit<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, it: &Iterate, d: &Direction, tau: f64) -> f64 {
    let n = it.z.len();
    let lo = fraction_to_boundary((0..n).filter(|i| ctx.has_lower[*i]).map(|i| (it.zl[i], d.zl[i])), tau);
    let hi = fraction_to_boundary((0..n).filter(|i| ctx.has_upper[*i]).map(|i| (it.zu[i], d.zu[i])), tau);
    let v = fraction_to_boundary(it.v.iter().copied().zip(d.v.iter().copied()), tau);
    lo.min(hi).min(v)
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

/// Directional derivative of the barrier objective along `d`.
fn barrier_slope<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, ev: &Evaluation, it: &Iterate, d: &Direction, mu: f64) -> f64 {
    let mut slope: f64 = ev.grad.iter().zip(&d.z).map(|(g, dz)| g * dz).sum();
    for i in 0..it.z.len() {
        if ctx.has_lower[i] {
            slope -= mu * d.z[i] / (it.z[i] - ctx.lower[i]);
        }
        if ctx.has_upper[i] {
            slope += mu * d.z[i] / (ctx.upper[i] - it.z[i]);
        }
    }
    for (s, ds) in it.s.iter().zip(&d.s) {
        slope -= mu * ds / s;
    }
    slope
}

/// Keeps each bound multiplier within a fixed factor of `μ / slack`.
fn safeguard_multipliers<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, it: &mut Iterate, mu: f64) {
    let clamp = |m: f64, slack: f64| m.clamp(mu / (MULTIPLIER_SPREAD * slack), MULTIPLIER_SPREAD * mu / slack);
    for i in 0..it.z.len() {
        if ctx.has_lower[i] {
            it.zl[i] = clamp(it.zl[i], it.z[i] - ctx.lower[i]);
        }
        if ctx.has_upper[i] {
            it.zu[i] = clamp(it.zu[i], ctx.upper[i] - it.z[i]);
        }
    }
    for (v, s) in it.v.iter_mut().zip(&it.s) {
        *v = clamp(*v, *s);
    }
}

fn initial_iterate<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, z0: &[f64], mu: f64) -> Iterate {
    let n = z0.len();
    let mut z = z0.to_vec();
    for i in 0..n {
        let (lo, hi) = (ctx.lower[i], ctx.upper[i]);
        let width = hi - lo;
        let push = |b: f64| BOUND_PUSH * b.abs().max(1.0);
        let zi = z[i];
        z[i] = match (ctx.has_lower[i], ctx.has_upper[i]) {
            (true, true) => {
                let pl = push(lo).min(BOUND_PUSH * width);
                let pu = push(hi).min(BOUND_PUSH * width);
                zi.clamp(lo + pl, hi - pu)
            }
            (true, false) => zi.max(lo + push(lo)),
            (false, true) => zi.min(hi - push(hi)),
            (false, false) => zi,
        };
    }
    let mut eq = vec![0.0; ctx.n_eq];
    let mut ineq = vec![0.0; ctx.problem.n_ineq()];
    ctx.problem.constraints(&z, &mut eq, &mut ineq);
    let s: Vec<f64> = ineq.iter().map(|g| (-g).max(MIN_SLACK)).collect();
    let v = s.iter().map(|si| mu / si).collect();
    let zl = (0..n)
        .map(|i| if ctx.has_lower[i] { mu / (z[i] - ctx.lower[i]) } else { 0.0 })
        .collect();
    let zu = (0..n)
        .map(|i| if ctx.has_upper[i] { mu / (ctx.upper[i] - z[i]) } else { 0.0 })
        .collect();
    Iterate {
        z,
        s,
        y: vec![0.0; ctx.n_eq],
        v,
        zl,
        zu,
    }
}

/// Least-squares equality multipliers, kept only when moderate.
fn initial_multipliers<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, sys: &mut NewtonSystem, ev: &Evaluation, it: &mut Iterate) {
    if ctx.n_eq == 0 {
        return;
    }
    sys.hw.clear();
    for i in 0..it.z.len() {
        sys.hw.add(i, i, 1.0);
    }
    if !sys.factorize(ev, 0.0, 1.0) {
        return;
    }
    let mut w = vec![0.0; ev.jac.n_rows()];
    w[ctx.n_eq..].copy_from_slice(&it.v);
    let mut b = ev.grad.clone();
    ev.jac.add_transpose_product(&w, &mut b);
    for i in 0..b.len() {
        b[i] = -(b[i] - it.zl[i] + it.zu[i]);
    }
    let (_, y) = sys.solve_saddle(&b, &vec![0.0; ctx.n_eq]);
    if y.iter().all(|v| v.is_finite() && v.abs() <= MAX_INITIAL_MULTIPLIER) {
        it.y = y;
    }
    sys.shift = 0.0;
    sys.last_shift = 0.0;
}

/// Solves `problem` from `z0`. Failure to converge is reported through
/// [`SolveResult::status`]; this function does not panic on hard problems.
pub fn solve<P: SmoothNlp + ?Sized>(problem: &P, z0: &[f64], opts: &SolverOptions) -> SolveResult {
    assert_eq!(z0.len(), problem.n_vars(), "initial point has wrong dimension");
    let start = Instant::now();
    let deadline = if opts.deterministic {
        None
    } else {
        Some(start + Duration::from_secs_f64(opts.wall_clock_limit))
    };
    let mut result = solve_once(problem, z0, opts, deadline);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);
    for _ in 0..opts.restarts {
        if matches!(result.status, SolveStatus::Converged | SolveStatus::TimeLimit) {
            break;
        }
        let perturbed: Vec<f64> = z0
            .iter()
            .map(|v| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                v + 0.02 * (u - 0.5) * (1.0 + v.abs())
            })
            .collect();
        let previous_inner = result.inner_iterations;
        result = solve_once(problem, &perturbed, opts, deadline);
        result.inner_iterations += previous_inner;
    }
    result.wall_time = start.elapsed().as_secs_f64();
    result
}

struct Progress {
    status: Option<SolveStatus>,
    outer: usize,
    inner: usize,
    barrier_history: Vec<f64>,
}

fn solve_once<P: SmoothNlp + ?Sized>(problem: &P, z0: &[f64], opts: &SolverOptions, deadline: Option<Instant>) -> SolveResult {
    let start = Instant::now();
    let ctx = Context::new(problem);
    let n = problem.n_vars();
    let n_eq = problem.n_eq();
    let n_in = problem.n_ineq();
    let mut mu = opts.initial_barrier;
    let mu_min = (opts.stationarity_tol * opts.stationarity_tol).min(opts.constraint_tol) / 10.0;
    let mut it = initial_iterate(&ctx, z0, mu);
    let mut ev = Evaluation {
        f: 0.0,
        grad: vec![0.0; n],
        eq: vec![0.0; n_eq],
        ineq: vec![0.0; n_in],
        jac: SparseRows::default(),
    };
    ctx.evaluate(&it.z, &mut ev);
    let mut sys = NewtonSystem::new(problem.hessian_shape(), n, n_eq, &ev.jac);
    initial_multipliers(&ctx, &mut sys, &ev, &mut it);
    let mut filter = Filter::default();
    let mut progress = Progress {
        status: None,
        outer: 1,
        inner: 0,
        barrier_history: vec![mu],
    };
    let mut stage_inner = 0;
    let mut trial_eq = vec![0.0; n_eq];
    let mut trial_ineq = vec![0.0; n_in];
    let zero_eq = vec![0.0; n_eq];

    'newton: loop {
        ctx.evaluate(&it.z, &mut ev);
        if !ev.f.is_finite() || ev.grad.iter().chain(&ev.eq).chain(&ev.ineq).any(|v| !v.is_finite()) {
            progress.status = Some(SolveStatus::NumericalFailure);
            break;
        }
        let dual_grad = ctx.lagrangian_gradient(&ev, &it);
        let kkt = kkt_from_parts(&ctx, &ev, &it, &dual_grad);
        if kkt.max_eq_residual <= opts.constraint_tol
            && kkt.max_ineq_violation <= opts.constraint_tol
            && kkt.stationarity <= opts.stationarity_tol
            && kkt.complementarity <= opts.stationarity_tol
        {
            progress.status = Some(SolveStatus::Converged);
            break;
        }
        // barrier subproblem error; a small one moves μ down
        loop {
            let err = barrier_error(&ctx, &ev, &it, &dual_grad, mu);
            if err > BARRIER_TOL_FACTOR * mu || mu <= mu_min {
                break;
            }
            if progress.outer >= opts.max_outer_iterations {
                progress.status = Some(SolveStatus::IterationLimit);
                break 'newton;
            }
            mu = (opts.barrier_decrease * mu).min(mu.powf(1.5)).max(mu_min);
            progress.outer += 1;
            progress.barrier_history.push(mu);
            stage_inner = 0;
            filter.reset();
        }
        if deadline.is_some_and(|d| Instant::now() >= d) {
            progress.status = Some(SolveStatus::TimeLimit);
            break;
        }
        if stage_inner >= opts.max_inner_iterations {
            progress.status = Some(SolveStatus::IterationLimit);
            break;
        }
        stage_inner += 1;
        progress.inner += 1;

        sys.assemble(&ctx, &ev, &it, true);
        let tau = (1.0 - mu).max(0.99);
        let rg: Vec<f64> = ev.ineq.iter().zip(&it.s).map(|(g, s)| g + s).collect();
        let theta0 = ev.eq.iter().map(|c| c.abs()).sum::<f64>() + rg.iter().map(|r| r.abs()).sum::<f64>();
        let Some((phi0, _)) = ctx.merit_parts(&it.z, &it.s, mu, &mut trial_eq, &mut trial_ineq) else {
            progress.status = Some(SolveStatus::NumericalFailure);
            break;
        };
        filter.initialize(theta0);

        let mut accepted = None;
        let mut shift = 0.0;
        'attempt: for _ in 0..MAX_SHIFT_ATTEMPTS {
            if !sys.factorize(&ev, shift, mu) {
                break;
            }
            let d = loop {
                let d = newton_direction(&ctx, &sys, &ev, &it, &dual_grad, mu, &ev.eq, &rg);
                // curvature is judged on the tangential part of the step
                let (tangent, _) = sys.solve_saddle(&primal_rhs(&ctx, &ev, &it, &dual_grad, mu, &rg).0, &zero_eq);
                if d.z.iter().chain(&d.s).chain(&d.y).all(|v| v.is_finite()) && sys.curvature_ok(&tangent) {
                    break d;
                }
                if !sys.raise_shift() || !sys.factorize(&ev, sys.shift, mu) {
                    break 'attempt;
                }
            };
            let slope = barrier_slope(&ctx, &ev, &it, &d, mu);
            let alpha_max = primal_step_limit(&ctx, &it, &d, tau);
            let alpha_min = filter.min_step(theta0, slope).max(MIN_STEP * alpha_max);
            let mut alpha = alpha_max;
            let mut first = true;
            while alpha >= alpha_min && alpha > 0.0 {
                let z_t = axpy(&it.z, alpha, &d.z);
                let s_t = axpy(&it.s, alpha, &d.s);
                let trial = ctx.merit_parts(&z_t, &s_t, mu, &mut trial_eq, &mut trial_ineq);
                if let Some((phi, theta)) = trial {
                    if let Some(f_type) = filter.acceptable(phi0, theta0, slope, alpha, phi, theta) {
                        accepted = Some((d.clone(), alpha, f_type));
                        break;
                    }
                    if first && theta >= theta0 {
                        if let Some(step) = second_order_correction(
                            &ctx, &sys, &ev, &it, &dual_grad, mu, tau, alpha, &rg, &mut filter, (phi0, theta0, slope),
                            (&z_t, &s_t),
                        ) {
                            accepted = Some(step);
                            break;
                        }
                    }
                }
                first = false;
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            shift = (sys.shift * 10.0).max(1e-2);
        }
        let Some((d, alpha, f_type)) = accepted else {
            filter.augment(phi0, theta0);
            if restore(&ctx, &mut sys, &mut ev, &mut it, mu, &filter, &mut progress.inner) {
                continue;
            }
            break;
        };
        if !f_type {
            filter.augment(phi0, theta0);
        }
        let alpha_d = dual_step_limit(&ctx, &it, &d, tau);
        it.z = axpy(&it.z, alpha, &d.z);
        it.s = axpy(&it.s, alpha, &d.s);
        it.y = axpy(&it.y, alpha, &d.y);
        it.v = axpy(&it.v, alpha_d, &d.v);
        it.zl = axpy(&it.zl, alpha_d, &d.zl);
        it.zu = axpy(&it.zu, alpha_d, &d.zu);
        safeguard_multipliers(&ctx, &mut it, mu);
    }

    let kkt = kkt_report(problem, &it.z, &it.y, &it.v);
    let status = progress.status.unwrap_or(if kkt.max_eq_residual > opts.constraint_tol || kkt.max_ineq_violation > opts.constraint_tol {
        SolveStatus::InfeasibleStall
    } else {
        SolveStatus::IterationLimit
    });
    SolveResult {
        status,
        objective: problem.objective(&it.z),
        z_final: it.z,
        max_eq_residual: kkt.max_eq_residual,
        max_ineq_violation: kkt.max_ineq_violation,
        stationarity_residual: kkt.stationarity,
        complementarity: kkt.complementarity,
        iterations: progress.outer,
        inner_iterations: progress.inner,
        wall_time: start.elapsed().as_secs_f64(),
        eq_multipliers: it.y,
        ineq_multipliers: it.v,
        barrier_history: progress.barrier_history,
    }
}

fn kkt_from_parts<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, ev: &Evaluation, it: &Iterate, dual_grad: &[f64]) -> KktReport {
    let (max_eq_residual, max_ineq_violation) = violation_norms(&ev.eq, &ev.ineq);
    KktReport {
        stationarity: projected_gradient_norm(&it.z, dual_grad, ctx.lower, ctx.upper),
        max_eq_residual,
        max_ineq_violation,
        complementarity: max_abs(it.v.iter().zip(&ev.ineq).map(|(v, g)| v * g)),
    }
}

/// Scaled optimality error of the barrier subproblem.
fn barrier_error<P: SmoothNlp + ?Sized>(ctx: &Context<'_, P>, ev: &Evaluation, it: &Iterate, dual_grad: &[f64], mu: f64) -> f64 {
    let n = it.z.len();
    let dual = max_abs((0..n).map(|i| dual_grad[i] - it.zl[i] + it.zu[i]));
    let primal = max_abs(ev.eq.iter().copied().chain(ev.ineq.iter().zip(&it.s).map(|(g, s)| g + s)));
    let mut comp = max_abs(it.v.iter().zip(&it.s).map(|(v, s)| v * s - mu));
    for i in 0..n {
        if ctx.has_lower[i] {
            comp = comp.max((it.zl[i] * (it.z[i] - ctx.lower[i]) - mu).abs());
        }
        if ctx.has_upper[i] {
            comp = comp.max((it.zu[i] * (ctx.upper[i] - it.z[i]) - mu).abs());
        }
    }
    let count = (it.y.len() + it.v.len() + 2 * n).max(1) as f64;
    let mult_sum = it.y.iter().chain(&it.v).chain(&it.zl).chain(&it.zu).map(|v| v.abs()).sum::<f64>();
    let s_d = (mult_sum / count).max(100.0) / 100.0;
    (dual / s_d).max(primal).max(comp / s_d)
}
