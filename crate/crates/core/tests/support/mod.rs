//! Shared oracles for the integration tests.
#![allow(dead_code)]

use aiplan_core::dynamics::{mix_rotors, rk4_jacobians, rk4_step, Model, ModelKind, QuadParams, RotorThrusts};
use aiplan_core::nlp_solver::{SmoothNlp, SparseRows};
use aiplan_core::planner::PlanReport;
use aiplan_core::scenario::{Scenario, ScenarioRng};
use aiplan_core::transcription::{NlpProblem, Obstacle, T_MIN};

/// `|a − b| / max(1, |b|)`
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// Random state, input and step inside (or near) the model's operating box.
pub fn random_stage(model: &Model, rng: &mut ScenarioRng) -> (Vec<f64>, Vec<f64>, f64) {
    let x: Vec<f64> = match model.kind() {
        ModelKind::PointMass2d => (0..4).map(|k| if k < 2 { rng.uniform(0.0, 10.0) } else { rng.uniform(-8.0, 8.0) }).collect(),
        ModelKind::Quadrotor3d => {
            let mut x: Vec<f64> = (0..13).map(|_| rng.uniform(-1.0, 1.0)).collect();
            for k in 0..3 {
                x[k] = rng.uniform(0.0, 10.0);
                x[7 + k] = rng.uniform(-6.0, 6.0);
                x[10 + k] = rng.uniform(-10.0, 10.0);
            }
            x
        }
    };
    let (lo, hi) = model.input_bounds();
    let u = (0..model.input_dim()).map(|_| rng.uniform(lo, hi)).collect();
    (x, u, rng.uniform(0.005, 0.05))
}

/// Worst relative error of `rk4_jacobians` against central differences of `rk4_step`.
pub fn rk4_jacobian_error(model: &Model, x: &[f64], u: &[f64], dt: f64) -> f64 {
    let j = rk4_jacobians(model, x, u, dt);
    let nx = x.len();
    let mut worst: f64 = 0.0;
    let mut compare = |col: &dyn Fn(f64) -> Vec<f64>, h: f64, exact: &dyn Fn(usize) -> f64| {
        let (p, m) = (col(h), col(-h));
        for r in 0..nx {
            worst = worst.max(rel_err(exact(r), (p[r] - m[r]) / (2.0 * h)));
        }
    };
    for c in 0..nx {
        let h = fd_step(x[c]);
        let col = |d: f64| {
            let mut y = x.to_vec();
            y[c] += d;
            rk4_step(model, &y, u, dt)
        };
        compare(&col, h, &|r| j.wrt_state[(r, c)]);
    }
    for c in 0..u.len() {
        let h = fd_step(u[c]);
        let col = |d: f64| {
            let mut v = u.to_vec();
            v[c] += d;
            rk4_step(model, x, &v, dt)
        };
        compare(&col, h, &|r| j.wrt_input[(r, c)]);
    }
    let h = 1e-7;
    let col = |d: f64| rk4_step(model, x, u, dt + d);
    compare(&col, h, &|r| j.wrt_dt[r]);
    worst
}

fn all_constraints(p: &NlpProblem, z: &[f64]) -> Vec<f64> {
    let mut eq = vec![0.0; p.n_eq()];
    let mut ineq = vec![0.0; p.n_ineq()];
    p.constraints(z, &mut eq, &mut ineq);
    eq.extend(ineq);
    eq
}

/// Worst relative error of the sparse constraint Jacobian against a
/// fourth-order central difference, entries outside the pattern included.
pub fn transcription_jacobian_error(p: &NlpProblem, z: &[f64]) -> f64 {
    let mut jac = SparseRows::default();
    p.constraint_jacobian(z, &mut jac);
    let rows = p.n_eq() + p.n_ineq();
    assert_eq!(jac.n_rows(), rows);
    let n = p.n_vars();
    let mut dense = vec![0.0; rows * n];
    for r in 0..rows {
        let (cols, vals) = jac.row(r);
        for (c, v) in cols.iter().zip(vals) {
            dense[r * n + c] += v;
        }
    }
    let mut worst: f64 = 0.0;
    let mut y = z.to_vec();
    for c in 0..n {
        let h = 1e-3 * z[c].abs().max(1.0);
        let mut at = |k: f64| {
            y[c] = z[c] + k * h;
            all_constraints(p, &y)
        };
        let (p2, p1, m1, m2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        y[c] = z[c];
        for r in 0..rows {
            let fd = (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * h);
            worst = worst.max(rel_err(dense[r * n + c], fd));
        }
    }
    worst
}

/// Random decision vector with states and inputs in plausible ranges and
/// `T_f` inside `[T_MIN, N·dt_max]`.
pub fn random_point(p: &NlpProblem, dt_max: f64, rng: &mut ScenarioRng) -> Vec<f64> {
    let l = &p.layout;
    let mut z = vec![0.0; p.n_vars()];
    for i in 0..=l.n_intervals {
        let (x, u, _) = random_stage(&p.model, rng);
        z[l.state(i)].copy_from_slice(&x);
        if i < l.n_intervals {
            z[l.input(i)].copy_from_slice(&u);
        }
    }
    z[l.t_f()] = rng.uniform(T_MIN, l.n_intervals as f64 * dt_max);
    z
}

/// Global RK4 error ratio between step `dt` and `dt/2` on a tumbling quadrotor.
pub fn rk4_order_ratio(dt: f64) -> f64 {
    let model = Model::Quadrotor(QuadParams::default());
    let mut x0 = vec![1.0, 2.0, 5.0, 0.9, 0.1, -0.2, 0.3, 0.5, -0.4, 0.2, 2.0, -3.0, 1.5];
    let qn = x0[3..7].iter().map(|q| q * q).sum::<f64>().sqrt();
    x0[3..7].iter_mut().for_each(|q| *q /= qn);
    let u = [2.15, 2.0, 2.1, 2.05];
    let horizon = 0.64;
    let run = |h: f64| {
        let steps = (horizon / h).round() as usize;
        (0..steps).fold(x0.clone(), |x, _| rk4_step(&model, &x, &u, h))
    };
    let reference = run(dt / 64.0);
    let err = |x: Vec<f64>| x.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    err(run(dt)) / err(run(dt / 2.0))
}

/// Worst deviation of `mix(a·f + b·g)` from `a·mix(f) + b·mix(g)`, relative to magnitude.
pub fn mix_linearity_error(f: [f64; 4], g: [f64; 4], a: f64, b: f64) -> f64 {
    let p = QuadParams::default();
    let comb: [f64; 4] = std::array::from_fn(|k| a * f[k] + b * g[k]);
    let (mf, mg, mc) = (mix_rotors(&RotorThrusts { f }, &p), mix_rotors(&RotorThrusts { f: g }, &p), mix_rotors(&RotorThrusts { f: comb }, &p));
    let scale = 1.0 + f.iter().chain(&g).map(|v| v.abs()).sum::<f64>() * (a.abs() + b.abs());
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        worst = worst.max((mc.f_t[k] - (a * mf.f_t[k] + b * mg.f_t[k])).abs() / scale);
        worst = worst.max((mc.tau[k] - (a * mf.tau[k] + b * mg.tau[k])).abs() / scale);
    }
    worst
}

/// Brute force over the full (node × obstacle) table, then read off the
/// violated inactive obstacles in node-major order.
pub fn brute_force_feasibility(states: &[Vec<f64>], obstacles: &[Obstacle], inactive: &[usize], epsilon: f64) -> (bool, Vec<usize>) {
    let table: Vec<Vec<bool>> = states
        .iter()
        .map(|x| {
            obstacles
                .iter()
                .map(|o| {
                    let (dx, dy) = (x[0] - o.center[0], x[1] - o.center[1]);
                    (dx * dx + dy * dy).sqrt() <= o.radius + epsilon
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for row in &table {
        for &j in inactive {
            if row[j] && !out.contains(&j) {
                out.push(j);
            }
        }
    }
    (out.is_empty(), out)
}

/// Randomized check case. Coordinates are multiples of 1/64 so that some
/// nodes land exactly on a padded circle.
pub fn random_feasibility_case(rng: &mut ScenarioRng) -> (Vec<Vec<f64>>, Vec<Obstacle>, Vec<usize>, f64) {
    let grid = |v: f64| (v * 64.0).round() / 64.0;
    let n_obs = (rng.unit() * 12.0) as usize;
    let epsilon = grid(rng.uniform(0.0, 0.5));
    let obstacles: Vec<Obstacle> = (0..n_obs)
        .map(|_| Obstacle {
            center: [grid(rng.uniform(0.0, 10.0)), grid(rng.uniform(0.0, 10.0))],
            radius: grid(rng.uniform(0.1, 1.0)),
        })
        .collect();
    let n_nodes = 1 + (rng.unit() * 40.0) as usize;
    let states = (0..n_nodes)
        .map(|_| {
            if n_obs > 0 && rng.unit() < 0.3 {
                let o = &obstacles[(rng.unit() * n_obs as f64) as usize];
                let d = o.radius + epsilon;
                let p = match (rng.unit() * 4.0) as usize {
                    0 => [o.center[0] + d, o.center[1]],
                    1 => [o.center[0] - d, o.center[1]],
                    2 => [o.center[0], o.center[1] + d],
                    _ => [o.center[0], o.center[1] - d],
                };
                vec![p[0], p[1], 0.0, 0.0]
            } else {
                vec![rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0), 0.0, 0.0]
            }
        })
        .collect();
    let mut inactive: Vec<usize> = (0..n_obs).filter(|_| rng.unit() < 0.7).collect();
    // shuffle so the scan order is not always ascending
    for k in (1..inactive.len()).rev() {
        let s = (rng.unit() * (k + 1) as f64) as usize;
        inactive.swap(k, s);
    }
    (states, obstacles, inactive, epsilon)
}

/// Asserts the planner's structural invariants and returns the report.
pub fn checked(report: PlanReport, scenario: &Scenario) -> PlanReport {
    if let Err(e) = report.check_invariants(scenario.obstacles.len()) {
        panic!("planner invariant violated on seed {}: {e}", scenario.seed);
    }
    report
}
