//! Direct multiple-shooting transcription of the free-final-time problem
//!
//! ```text
//! minimize T_f over x_0..x_N, u_0..u_{N-1}, T_f
//!   x_{i+1} = rk4(x_i, u_i, T_f/N)            (defects)
//!   x_0 = x_initial, x_N = x_final            (boundary)
//!   ‖q_i‖² = 1                                (quadrotor only)
//!   T_f/N ≤ dt_max
//!   ‖p_i − c_o‖² ≥ (r_o + ε + δ)²             (every node, every active obstacle, x-y only)
//!   input and body-rate boxes, T_f ∈ [T_min, N·dt_max]
//! ```
//!
//! Variables are interleaved per node, `[x_0, u_0, x_1, u_1, …, x_N, T_f]`,
//! so every Hessian coupling except those with `T_f` lies in a narrow band.
//! Inequalities are written `g(z) ≤ 0`; obstacle rows are appended one
//! block of `N + 1` rows per active obstacle after the single dt-cap row.

use crate::dynamics::{self, quad_index, Model, ModelKind, MAX_STATE_DIM};
use crate::nlp_solver::{self, BandedBordered, HessianShape, SmoothNlp, SparseRows};
use crate::scenario::Scenario;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Lower bound on the final time.
pub const T_MIN: f64 = 0.1;
/// Cruise speed used to size the cold-start final time.
pub const GUESS_SPEED: f64 = 7.0;

/// Circular (2D) or full-height cylindrical (3D) obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Obstacle {
    pub fn distance_xy(&self, p: &[f64]) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }
}

/// Clearance pad and acceptance tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Margins {
    /// Vehicle size plus safety distance added to every radius (m).
    pub epsilon: f64,
    /// Extra pad that turns the strict clearance inequality into a closed one (m).
    pub delta: f64,
    pub defect_tol: f64,
    pub bound_tol: f64,
    pub boundary_tol: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            delta: 1e-3,
            defect_tol: 1e-6,
            bound_tol: 1e-6,
            boundary_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub t_f: f64,
}

impl Trajectory {
    pub fn n_intervals(&self) -> usize {
        self.inputs.len()
    }

    pub fn dt(&self) -> f64 {
        self.t_f / self.inputs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranscriptionError {
    #[error("need at least 2 intervals, got {0}")]
    TooFewIntervals(usize),
    #[error("dt_max must be positive, got {0}")]
    NonPositiveDtMax(f64),
    #[error("N·dt_max = {0} s leaves no room above the minimum final time")]
    HorizonTooShort(f64),
    #[error("active obstacle index {index} out of range for {n_obs} obstacles")]
    ActiveIndexOutOfRange { index: usize, n_obs: usize },
    #[error("model {model} does not match scenario model {scenario}")]
    ModelMismatch { model: ModelKind, scenario: ModelKind },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Position of every variable in the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nx: usize,
    pub nu: usize,
    pub n_intervals: usize,
}

impl Layout {
    fn stride(&self) -> usize {
        self.nx + self.nu
    }

    pub fn state(&self, i: usize) -> Range<usize> {
        let s = i * self.stride();
        s..s + self.nx
    }

    pub fn input(&self, i: usize) -> Range<usize> {
        let s = i * self.stride() + self.nx;
        s..s + self.nu
    }

    pub fn t_f(&self) -> usize {
        self.n_intervals * self.stride() + self.nx
    }

    pub fn n_vars(&self) -> usize {
        self.t_f() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObstacleBlock {
    /// Index into the scenario's obstacle list.
    pub obstacle: usize,
    /// Rows within the inequality vector.
    pub rows: Range<usize>,
}

/// Row ranges of every constraint block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintBlocks {
    pub defects: Range<usize>,
    pub boundary: Range<usize>,
    /// Per-node `‖q‖² − 1` rows. Empty by default: the renormalized RK4
    /// defects already pin every node quaternion after the first to unit
    /// norm, and the boundary rows pin the first, so these rows only add
    /// linear dependence to the equality Jacobian.
    pub quat_norms: Range<usize>,
    pub dt_cap: Range<usize>,
    pub obstacles: Vec<ObstacleBlock>,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveObstacle {
    center: [f64; 2],
    padded_radius_sq: f64,
}

/// The transcribed NLP for one active obstacle subset.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub model: Model,
    pub layout: Layout,
    pub blocks: ConstraintBlocks,
    pub dt_max: f64,
    pub margins: Margins,
    pub t_min: f64,
    pub t_cap: f64,
    x_initial: Vec<f64>,
    x_final: Vec<f64>,
    active: Vec<ActiveObstacle>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_eq: usize,
    n_ineq: usize,
}

pub fn build_nlp(
    model: &Model,
    scenario: &Scenario,
    active: &[usize],
    n_intervals: usize,
    dt_max: f64,
    margins: &Margins,
) -> Result<NlpProblem, TranscriptionError> {
    if n_intervals < 2 {
        return Err(TranscriptionError::TooFewIntervals(n_intervals));
    }
    if !(dt_max > 0.0) || !dt_max.is_finite() {
        return Err(TranscriptionError::NonPositiveDtMax(dt_max));
    }
    if model.kind() != scenario.model {
        return Err(TranscriptionError::ModelMismatch {
            model: model.kind(),
            scenario: scenario.model,
        });
    }
    let t_cap = n_intervals as f64 * dt_max;
    if t_cap <= T_MIN {
        return Err(TranscriptionError::HorizonTooShort(t_cap));
    }
    let n_obs = scenario.obstacles.len();
    if let Some(&index) = active.iter().find(|&&k| k >= n_obs) {
        return Err(TranscriptionError::ActiveIndexOutOfRange { index, n_obs });
    }
    let nx = model.state_dim();
    for x in [&scenario.x_initial, &scenario.x_final] {
        if x.len() != nx {
            return Err(TranscriptionError::DimensionMismatch { expected: nx, got: x.len() });
        }
    }

    let layout = Layout {
        nx,
        nu: model.input_dim(),
        n_intervals,
    };
    let n_nodes = n_intervals + 1;
    let defects = 0..n_intervals * nx;
    let boundary = defects.end..defects.end + 2 * nx;
    // empty unless requested, see `with_quaternion_norm_rows`
    let quat_norms = boundary.end..boundary.end;
    let dt_cap = 0..1;
    let mut obstacles = Vec::with_capacity(active.len());
    let mut active_obs = Vec::with_capacity(active.len());
    for (k, &index) in active.iter().enumerate() {
        let start = dt_cap.end + k * n_nodes;
        obstacles.push(ObstacleBlock {
            obstacle: index,
            rows: start..start + n_nodes,
        });
        let o = &scenario.obstacles[index];
        let r = o.radius + margins.epsilon + margins.delta;
        active_obs.push(ActiveObstacle {
            center: o.center,
            padded_radius_sq: r * r,
        });
    }

    let n_vars = layout.n_vars();
    let mut lower = vec![f64::NEG_INFINITY; n_vars];
    let mut upper = vec![f64::INFINITY; n_vars];
    let state_bounds = model.state_bounds();
    let (u_lo, u_hi) = model.input_bounds();
    for i in 0..n_nodes {
        for (k, (lo, hi)) in layout.state(i).zip(&state_bounds) {
            lower[k] = *lo;
            upper[k] = *hi;
        }
        if i < n_intervals {
            for k in layout.input(i) {
                lower[k] = u_lo;
                upper[k] = u_hi;
            }
        }
    }
    lower[layout.t_f()] = T_MIN;
    upper[layout.t_f()] = t_cap;

    let n_eq = quat_norms.end;
    let n_ineq = dt_cap.end + active.len() * n_nodes;
    Ok(NlpProblem {
        model: *model,
        layout,
        blocks: ConstraintBlocks {
            defects,
            boundary,
            quat_norms,
            dt_cap,
            obstacles,
        },
        dt_max,
        margins: *margins,
        t_min: T_MIN,
        t_cap,
        x_initial: scenario.x_initial.clone(),
        x_final: scenario.x_final.clone(),
        active: active_obs,
        lower,
        upper,
        n_eq,
        n_ineq,
    })
}

impl NlpProblem {
    /// Appends the per-node quaternion-norm rows (quadrotor only).
    pub fn with_quaternion_norm_rows(mut self) -> Self {
        if self.is_quad() && self.blocks.quat_norms.is_empty() {
            let start = self.blocks.boundary.end;
            self.blocks.quat_norms = start..start + self.layout.n_intervals + 1;
            self.n_eq = self.blocks.quat_norms.end;
        }
        self
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    pub fn n_eq(&self) -> usize {
        self.n_eq
    }

    pub fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    /// Squared padded radius used by each active obstacle's rows.
    pub fn padded_radius_sq(&self) -> Vec<f64> {
        self.active.iter().map(|a| a.padded_radius_sq).collect()
    }

    fn is_quad(&self) -> bool {
        self.model.kind() == ModelKind::Quadrotor3d
    }

    fn stage_point(&self, z: &[f64], i: usize, y: &mut [f64]) {
        let l = &self.layout;
        let s = l.state(i).start;
        let m = l.nx + l.nu;
        y[..m].copy_from_slice(&z[s..s + m]);
        y[m] = z[l.t_f()] / l.n_intervals as f64;
    }

    pub fn encode(&self, t: &Trajectory) -> Result<Vec<f64>, TranscriptionError> {
        let l = &self.layout;
        if t.states.len() != l.n_intervals + 1 {
            return Err(TranscriptionError::DimensionMismatch {
                expected: l.n_intervals + 1,
                got: t.states.len(),
            });
        }
        if t.inputs.len() != l.n_intervals {
            return Err(TranscriptionError::DimensionMismatch {
                expected: l.n_intervals,
                got: t.inputs.len(),
            });
        }
        let mut z = vec![0.0; l.n_vars()];
        for (i, x) in t.states.iter().enumerate() {
            if x.len() != l.nx {
                return Err(TranscriptionError::DimensionMismatch { expected: l.nx, got: x.len() });
            }
            z[l.state(i)].copy_from_slice(x);
        }
        for (i, u) in t.inputs.iter().enumerate() {
            if u.len() != l.nu {
                return Err(TranscriptionError::DimensionMismatch { expected: l.nu, got: u.len() });
            }
            z[l.input(i)].copy_from_slice(u);
        }
        z[l.t_f()] = t.t_f;
        Ok(z)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Trajectory, TranscriptionError> {
        let l = &self.layout;
        if z.len() != l.n_vars() {
            return Err(TranscriptionError::DimensionMismatch {
                expected: l.n_vars(),
                got: z.len(),
            });
        }
        Ok(Trajectory {
            states: (0..=l.n_intervals).map(|i| z[l.state(i)].to_vec()).collect(),
            inputs: (0..l.n_intervals).map(|i| z[l.input(i)].to_vec()).collect(),
            t_f: z[l.t_f()],
        })
    }

    /// Max equality residual and max inequality violation at `z`.
    pub fn eval_constraint_violation(&self, z: &[f64]) -> Result<(f64, f64), TranscriptionError> {
        if z.len() != self.n_vars() {
            return Err(TranscriptionError::DimensionMismatch {
                expected: self.n_vars(),
                got: z.len(),
            });
        }
        Ok(nlp_solver::constraint_violation(self, z))
    }
}

/// Starting point for the solver: the warm trajectory verbatim when given,
/// otherwise the straight segment between the boundary states at rest input.
pub fn initial_guess(problem: &NlpProblem, warm: Option<&Trajectory>) -> Result<Vec<f64>, TranscriptionError> {
    if let Some(t) = warm {
        return problem.encode(t);
    }
    let l = &problem.layout;
    let n = l.n_intervals;
    let x0 = &problem.x_initial;
    let x1 = &problem.x_final;
    let mut z = vec![0.0; l.n_vars()];
    for i in 0..=n {
        let s = i as f64 / n as f64;
        for (k, idx) in l.state(i).enumerate() {
            z[idx] = x0[k] + s * (x1[k] - x0[k]);
        }
        if problem.is_quad() {
            let q = quad_index::QUAT;
            let base = l.state(i).start;
            z[base + q..base + q + 4].copy_from_slice(&x0[q..q + 4]);
        }
    }
    let rest = problem.model.rest_input();
    for i in 0..n {
        z[l.input(i)].copy_from_slice(&rest);
    }
    let np = problem.model.position_dim();
    let dist = (0..np).map(|k| (x1[k] - x0[k]).powi(2)).sum::<f64>().sqrt();
    z[l.t_f()] = (dist / GUESS_SPEED).clamp(problem.t_min, problem.t_cap);
    Ok(z)
}

/// Extra clearance (m) beyond the padded radius when moving guess nodes out.
pub const DETOUR_MARGIN: f64 = 0.05;

/// Moves guess nodes out of the active obstacles.
///
/// Overlapping padded circles are grouped into clusters. For each cluster the
/// nodes inside it are pushed along the normal of the chord through the
/// cluster until they clear every circle of the cluster by [`DETOUR_MARGIN`].
/// Both sides are tried and the one needing less total displacement is kept.
/// Boundary nodes are left alone.
pub fn detour_guess(problem: &NlpProblem, z: &mut [f64]) {
    let l = &problem.layout;
    let n = l.n_intervals;
    let disks: Vec<([f64; 2], f64)> = problem
        .active
        .iter()
        .map(|a| (a.center, a.padded_radius_sq.sqrt() + DETOUR_MARGIN))
        .collect();
    let pos = |z: &[f64], i: usize| {
        let s = l.state(i).start;
        [z[s], z[s + 1]]
    };
    for cluster in overlap_clusters(&disks) {
        let members: Vec<([f64; 2], f64)> = cluster.iter().map(|&k| disks[k]).collect();
        let inside = |p: [f64; 2]| members.iter().any(|(c, r)| (p[0] - c[0]).hypot(p[1] - c[1]) < *r);
        let nodes: Vec<usize> = (1..n).filter(|&i| inside(pos(z, i))).collect();
        let (Some(&first), Some(&last)) = (nodes.first(), nodes.last()) else { continue };
        let (p0, p1) = (pos(z, first - 1), pos(z, (last + 1).min(n)));
        let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
        let t = if len < 1e-9 { [1.0, 0.0] } else { [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len] };
        let push = |side: [f64; 2]| -> (f64, Vec<[f64; 2]>) {
            let mut total = 0.0;
            let moved = nodes
                .iter()
                .map(|&i| {
                    let mut p = pos(z, i);
                    let start = p;
                    // Each pass exits one circle along `side`; exits never re-enter the same one.
                    for _ in 0..=members.len() {
                        let Some((c, r)) = members.iter().find(|(c, r)| (p[0] - c[0]).hypot(p[1] - c[1]) < *r) else { break };
                        let d = [p[0] - c[0], p[1] - c[1]];
                        let b = d[0] * side[0] + d[1] * side[1];
                        let lam = -b + (b * b - (d[0] * d[0] + d[1] * d[1] - r * r)).max(0.0).sqrt() + 1e-9;
                        p = [p[0] + lam * side[0], p[1] + lam * side[1]];
                    }
                    total += (p[0] - start[0]).hypot(p[1] - start[1]);
                    p
                })
                .collect();
            (total, moved)
        };
        let (left, right) = (push([-t[1], t[0]]), push([t[1], -t[0]]));
        let best = if left.0 <= right.0 { left.1 } else { right.1 };
        for (&i, p) in nodes.iter().zip(best) {
            let s = l.state(i).start;
            z[s] = p[0];
            z[s + 1] = p[1];
        }
    }
}

/// Connected components of the circle-overlap graph, in index order.
fn overlap_clusters(disks: &[([f64; 2], f64)]) -> Vec<Vec<usize>> {
    let mut label: Vec<Option<usize>> = vec![None; disks.len()];
    let mut clusters = Vec::new();
    for seed in 0..disks.len() {
        if label[seed].is_some() {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![seed];
        label[seed] = Some(id);
        let mut k = 0;
        while k < members.len() {
            let (ci, ri) = disks[members[k]];
            for j in 0..disks.len() {
                let (cj, rj) = disks[j];
                if label[j].is_none() && (ci[0] - cj[0]).hypot(ci[1] - cj[1]) < ri + rj {
                    label[j] = Some(id);
                    members.push(j);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

impl SmoothNlp for NlpProblem {
    fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    fn n_eq(&self) -> usize {
        self.n_eq
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, z: &[f64]) -> f64 {
        z[self.layout.t_f()]
    }

    fn objective_gradient(&self, _z: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        grad[self.layout.t_f()] = 1.0;
    }

    fn constraints(&self, z: &[f64], eq: &mut [f64], ineq: &mut [f64]) {
        let l = &self.layout;
        let (nx, nu, n) = (l.nx, l.nu, l.n_intervals);
        let h = z[l.t_f()] / n as f64;
        let mut next = [0.0; MAX_STATE_DIM];
        for i in 0..n {
            let xs = l.state(i);
            self.model.step_generic(&z[xs.clone()], &z[l.input(i)], h, &mut next[..nx]);
            let xn = l.state(i + 1);
            for k in 0..nx {
                eq[i * nx + k] = z[xn.start + k] - next[k];
            }
        }
        let b = self.blocks.boundary.start;
        let first = l.state(0).start;
        let last = l.state(n).start;
        for k in 0..nx {
            eq[b + k] = z[first + k] - self.x_initial[k];
            eq[b + nx + k] = z[last + k] - self.x_final[k];
        }
        if !self.blocks.quat_norms.is_empty() {
            let qb = self.blocks.quat_norms.start;
            for i in 0..=n {
                let q = l.state(i).start + quad_index::QUAT;
                eq[qb + i] = z[q..q + 4].iter().map(|v| v * v).sum::<f64>() - 1.0;
            }
        }
        let _ = nu;

        ineq[self.blocks.dt_cap.start] = h - self.dt_max;
        for (blk, obs) in self.blocks.obstacles.iter().zip(&self.active) {
            for i in 0..=n {
                let p = l.state(i).start;
                let dx = z[p] - obs.center[0];
                let dy = z[p + 1] - obs.center[1];
                ineq[blk.rows.start + i] = obs.padded_radius_sq - (dx * dx + dy * dy);
            }
        }
    }

    fn constraint_jacobian(&self, z: &[f64], jac: &mut SparseRows) {
        let l = &self.layout;
        let (nx, nu, n) = (l.nx, l.nu, l.n_intervals);
        let m = nx + nu + 1;
        let tf = l.t_f();
        let inv_n = 1.0 / n as f64;
        jac.row_start.clear();
        jac.cols.clear();
        jac.vals.clear();
        jac.row_start.push(0);

        let mut y = [0.0; MAX_STATE_DIM + 5];
        let mut next = [0.0; MAX_STATE_DIM];
        let mut sj = vec![0.0; nx * m];
        for i in 0..n {
            self.stage_point(z, i, &mut y[..m]);
            dynamics::step_jacobian_packed(&self.model, &y[..m], &mut next[..nx], &mut sj);
            let s = l.state(i).start;
            let sn = l.state(i + 1).start;
            for k in 0..nx {
                let row = &sj[k * m..(k + 1) * m];
                for a in 0..nx + nu {
                    jac.cols.push(s + a);
                    jac.vals.push(-row[a]);
                }
                jac.cols.push(sn + k);
                jac.vals.push(1.0);
                jac.cols.push(tf);
                jac.vals.push(-row[nx + nu] * inv_n);
                jac.row_start.push(jac.cols.len());
            }
        }
        for node in [0, n] {
            let s = l.state(node).start;
            for k in 0..nx {
                jac.cols.push(s + k);
                jac.vals.push(1.0);
                jac.row_start.push(jac.cols.len());
            }
        }
        if !self.blocks.quat_norms.is_empty() {
            for i in 0..=n {
                let q = l.state(i).start + quad_index::QUAT;
                for k in 0..4 {
                    jac.cols.push(q + k);
                    jac.vals.push(2.0 * z[q + k]);
                }
                jac.row_start.push(jac.cols.len());
            }
        }
        jac.cols.push(tf);
        jac.vals.push(inv_n);
        jac.row_start.push(jac.cols.len());
        for obs in &self.active {
            for i in 0..=n {
                let p = l.state(i).start;
                jac.cols.push(p);
                jac.vals.push(-2.0 * (z[p] - obs.center[0]));
                jac.cols.push(p + 1);
                jac.vals.push(-2.0 * (z[p + 1] - obs.center[1]));
                jac.row_start.push(jac.cols.len());
            }
        }
    }

    fn hessian_shape(&self) -> HessianShape {
        let l = &self.layout;
        HessianShape {
            bandwidth: 2 * l.nx + l.nu - 1,
            n_border: 1,
        }
    }

    fn add_lagrangian_hessian(&self, z: &[f64], _obj_weight: f64, eq_w: &[f64], ineq_w: &[f64], h: &mut BandedBordered) {
        // The objective is linear.
        let l = &self.layout;
        let (nx, nu, n) = (l.nx, l.nu, l.n_intervals);
        let m = nx + nu + 1;
        let tf = l.t_f();
        let inv_n = 1.0 / n as f64;
        let mut y = [0.0; MAX_STATE_DIM + 5];
        let mut grad = [0.0; MAX_STATE_DIM + 5];
        let mut hess = vec![0.0; m * m];
        for i in 0..n {
            let w = &eq_w[i * nx..(i + 1) * nx];
            if w.iter().all(|v| *v == 0.0) {
                continue;
            }
            self.stage_point(z, i, &mut y[..m]);
            dynamics::step_weighted_hessian_packed(&self.model, &y[..m], w, &mut grad[..m], &mut hess);
            let s = l.state(i).start;
            let var = |a: usize| if a < nx + nu { (s + a, 1.0) } else { (tf, inv_n) };
            for a in 0..m {
                let (va, sa) = var(a);
                for b in 0..=a {
                    let v = hess[a * m + b];
                    if v != 0.0 {
                        let (vb, sb) = var(b);
                        h.add(va, vb, -v * sa * sb);
                    }
                }
            }
        }
        if !self.blocks.quat_norms.is_empty() {
            let qb = self.blocks.quat_norms.start;
            for i in 0..=n {
                let w = eq_w[qb + i];
                if w != 0.0 {
                    let q = l.state(i).start + quad_index::QUAT;
                    for k in 0..4 {
                        h.add(q + k, q + k, 2.0 * w);
                    }
                }
            }
        }
        for blk in &self.blocks.obstacles {
            for i in 0..=n {
                let w = ineq_w[blk.rows.start + i];
                if w != 0.0 {
                    let p = l.state(i).start;
                    h.add(p, p, -2.0 * w);
                    h.add(p + 1, p + 1, -2.0 * w);
                }
            }
        }
    }
}
