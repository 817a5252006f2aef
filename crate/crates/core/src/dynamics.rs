//! Continuous-time vehicle models and their RK4 discretization.
//!
//! Two models are provided: a per-axis bounded 2D double integrator and the
//! rotor-thrust driven quadrotor. All dynamics are written once, generically
//! over [`Scalar`], so the same code path yields plain values, exact
//! first derivatives (forward dual numbers) and exact second derivatives
//! (second-order dual numbers) of the discrete step map.

use nalgebra::{DMatrix, DVector, U1};
use num_dual::{Dual2SVec64, DualNum, DualSVec64};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Numeric type the dynamics can be evaluated with.
pub trait Scalar: DualNum<Primitive = f64> + Copy {}
impl<T: DualNum<Primitive = f64> + Copy> Scalar for T {}

/// Largest state dimension of any model (quadrotor).
pub const MAX_STATE_DIM: usize = 13;
/// Largest input dimension of any model (quadrotor).
pub const MAX_INPUT_DIM: usize = 4;

pub const POINT_MASS_STATE_DIM: usize = 4;
pub const POINT_MASS_INPUT_DIM: usize = 2;
pub const QUAD_STATE_DIM: usize = 13;
pub const QUAD_INPUT_DIM: usize = 4;

/// Offsets into the flat quadrotor state `[p, q, v, w]`.
pub mod quad_index {
    pub const POS: usize = 0;
    pub const QUAT: usize = 3;
    pub const VEL: usize = 7;
    pub const RATE: usize = 10;
}

/// Standard gravity, pointing down the world z axis.
pub const GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "point-mass-2d")]
    PointMass2d,
    #[serde(rename = "quadrotor-3d")]
    Quadrotor3d,
}

impl ModelKind {
    pub fn state_dim(self) -> usize {
        match self {
            ModelKind::PointMass2d => POINT_MASS_STATE_DIM,
            ModelKind::Quadrotor3d => QUAD_STATE_DIM,
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            ModelKind::PointMass2d => POINT_MASS_INPUT_DIM,
            ModelKind::Quadrotor3d => QUAD_INPUT_DIM,
        }
    }

    /// Model with default parameters.
    pub fn default_model(self) -> Model {
        match self {
            ModelKind::PointMass2d => Model::PointMass(PointMassParams::default()),
            ModelKind::Quadrotor3d => Model::Quadrotor(QuadParams::default()),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::PointMass2d => "point-mass-2d",
            ModelKind::Quadrotor3d => "quadrotor-3d",
        })
    }
}

/// State of the planar double integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassState {
    pub p: [f64; 2],
    pub v: [f64; 2],
}

impl PointMassState {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.p[0], self.p[1], self.v[0], self.v[1]]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            p: [x[0], x[1]],
            v: [x[2], x[3]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassParams {
    /// Per-axis acceleration bound (m/s²).
    pub a_max: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        Self { a_max: 10.0 }
    }
}

/// Quadrotor state. The quaternion is stored scalar-first `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub p: [f64; 3],
    pub q: [f64; 4],
    pub v: [f64; 3],
    pub w: [f64; 3],
}

impl QuadState {
    /// Level hover at `p`.
    pub fn hover_at(p: [f64; 3]) -> Self {
        Self {
            p,
            q: [1.0, 0.0, 0.0, 0.0],
            v: [0.0; 3],
            w: [0.0; 3],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(QUAD_STATE_DIM);
        x.extend_from_slice(&self.p);
        x.extend_from_slice(&self.q);
        x.extend_from_slice(&self.v);
        x.extend_from_slice(&self.w);
        x
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            p: [x[0], x[1], x[2]],
            q: [x[3], x[4], x[5], x[6]],
            v: [x[7], x[8], x[9]],
            w: [x[10], x[11], x[12]],
        }
    }
}

/// Physical quadrotor parameters. Inertia is in kg·m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub m: f64,
    pub l: f64,
    pub inertia: [f64; 3],
    pub kappa: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub w_max: f64,
    pub g: [f64; 3],
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            m: 0.85,
            l: 0.15,
            inertia: [1.0e-3, 1.0e-3, 1.7e-3],
            kappa: 0.05,
            f_min: 0.0,
            f_max: 7.0,
            w_max: 15.0,
            g: GRAVITY,
        }
    }
}

impl QuadParams {
    /// Per-rotor thrust that balances gravity at level attitude.
    pub fn hover_thrust(&self) -> f64 {
        -self.m * self.g[2] / 4.0
    }
}

/// Single rotor thrusts `f1..f4` in newtons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorThrusts {
    pub f: [f64; 4],
}

/// Body-frame collective thrust and torque produced by the rotors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchDecomposition {
    pub f_t: [f64; 3],
    pub tau: [f64; 3],
}

/// Maps rotor thrusts to collective thrust and body torque (X configuration).
pub fn mix_rotors(f: &RotorThrusts, params: &QuadParams) -> WrenchDecomposition {
    let (f_t, tau) = mix_generic(&f.f, params);
    WrenchDecomposition {
        f_t: [0.0, 0.0, f_t],
        tau,
    }
}

fn mix_generic<T: Scalar>(f: &[T], params: &QuadParams) -> (T, [T; 3]) {
    let arm = params.l / std::f64::consts::SQRT_2;
    let thrust = f[0] + f[1] + f[2] + f[3];
    let tau = [
        (f[0] - f[1] - f[2] + f[3]) * arm,
        (f[2] + f[3] - f[0] - f[1]) * arm,
        (f[0] - f[1] + f[2] - f[3]) * params.kappa,
    ];
    (thrust, tau)
}

fn quad_deriv_generic<T: Scalar>(params: &QuadParams, x: &[T], f: &[T], out: &mut [T]) {
    use quad_index::*;
    let (thrust, tau) = mix_generic(f, params);
    let (qw, qx, qy, qz) = (x[QUAT], x[QUAT + 1], x[QUAT + 2], x[QUAT + 3]);
    let (wx, wy, wz) = (x[RATE], x[RATE + 1], x[RATE + 2]);

    for k in 0..3 {
        out[POS + k] = x[VEL + k];
    }

    // Third column of R(q), the body z axis expressed in the world frame.
    let two = T::from(2.0);
    let zx = (qx * qz + qw * qy) * two;
    let zy = (qy * qz - qw * qx) * two;
    let zz = qw * qw - qx * qx - qy * qy + qz * qz;
    let a = thrust / params.m;
    out[VEL] = zx * a + params.g[0];
    out[VEL + 1] = zy * a + params.g[1];
    out[VEL + 2] = zz * a + params.g[2];

    // q ⊙ [0, w] / 2
    let half = 0.5;
    out[QUAT] = (-(qx * wx) - qy * wy - qz * wz) * half;
    out[QUAT + 1] = (qw * wx + qy * wz - qz * wy) * half;
    out[QUAT + 2] = (qw * wy - qx * wz + qz * wx) * half;
    out[QUAT + 3] = (qw * wz + qx * wy - qy * wx) * half;

    let [jx, jy, jz] = params.inertia;
    // w × Jw for diagonal J
    let cx = wy * wz * (jz - jy);
    let cy = wz * wx * (jx - jz);
    let cz = wx * wy * (jy - jx);
    out[RATE] = (tau[0] - cx) / jx;
    out[RATE + 1] = (tau[1] - cy) / jy;
    out[RATE + 2] = (tau[2] - cz) / jz;
}

/// Time derivative of the quadrotor state as a flat 13-vector.
pub fn quad_deriv(x: &QuadState, f: &RotorThrusts, params: &QuadParams) -> [f64; QUAD_STATE_DIM] {
    let xs = x.to_vec();
    let mut out = [0.0; QUAD_STATE_DIM];
    quad_deriv_generic(params, &xs, &f.f, &mut out);
    out
}

/// Time derivative of the double integrator: `[v, u]`.
pub fn point_mass_deriv(x: &PointMassState, u: [f64; 2]) -> [f64; POINT_MASS_STATE_DIM] {
    [x.v[0], x.v[1], u[0], u[1]]
}

/// A vehicle model with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    PointMass(PointMassParams),
    Quadrotor(QuadParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::PointMass(_) => ModelKind::PointMass2d,
            Model::Quadrotor(_) => ModelKind::Quadrotor3d,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.kind().state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.kind().input_dim()
    }

    /// Box bounds on each input component.
    pub fn input_bounds(&self) -> (f64, f64) {
        match self {
            Model::PointMass(p) => (-p.a_max, p.a_max),
            Model::Quadrotor(p) => (p.f_min, p.f_max),
        }
    }

    /// Box bounds on each state component (infinite where unbounded).
    pub fn state_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); self.state_dim()];
        if let Model::Quadrotor(p) = self {
            for k in 0..3 {
                b[quad_index::RATE + k] = (-p.w_max, p.w_max);
            }
        }
        b
    }

    /// Input that keeps the vehicle at rest (hover thrust or zero acceleration).
    pub fn rest_input(&self) -> Vec<f64> {
        match self {
            Model::PointMass(_) => vec![0.0; POINT_MASS_INPUT_DIM],
            Model::Quadrotor(p) => vec![p.hover_thrust(); QUAD_INPUT_DIM],
        }
    }

    /// Number of leading state components that are positions.
    pub fn position_dim(&self) -> usize {
        match self {
            Model::PointMass(_) => 2,
            Model::Quadrotor(_) => 3,
        }
    }

    pub fn deriv<T: Scalar>(&self, x: &[T], u: &[T], out: &mut [T]) {
        match self {
            Model::PointMass(_) => {
                out[0] = x[2];
                out[1] = x[3];
                out[2] = u[0];
                out[3] = u[1];
            }
            Model::Quadrotor(p) => quad_deriv_generic(p, x, u, out),
        }
    }

    /// One classical RK4 step of length `h`, written into `out`. For the
    /// quadrotor the quaternion is renormalized once after the combined step.
    pub fn step_generic<T: Scalar>(&self, x: &[T], u: &[T], h: T, out: &mut [T]) {
        let n = self.state_dim();
        let zero = T::from(0.0);
        let mut k1 = [zero; MAX_STATE_DIM];
        let mut k2 = [zero; MAX_STATE_DIM];
        let mut k3 = [zero; MAX_STATE_DIM];
        let mut k4 = [zero; MAX_STATE_DIM];
        let mut tmp = [zero; MAX_STATE_DIM];
        let half_h = h * 0.5;

        self.deriv(x, u, &mut k1[..n]);
        for i in 0..n {
            tmp[i] = x[i] + half_h * k1[i];
        }
        self.deriv(&tmp[..n], u, &mut k2[..n]);
        for i in 0..n {
            tmp[i] = x[i] + half_h * k2[i];
        }
        self.deriv(&tmp[..n], u, &mut k3[..n]);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.deriv(&tmp[..n], u, &mut k4[..n]);
        let sixth_h = h / 6.0;
        for i in 0..n {
            out[i] = x[i] + sixth_h * (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]);
        }
        if let Model::Quadrotor(_) = self {
            normalize_quat(&mut out[quad_index::QUAT..quad_index::QUAT + 4]);
        }
    }
}

fn normalize_quat<T: Scalar>(q: &mut [T]) {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    for c in q.iter_mut() {
        *c /= norm;
    }
}

/// RK4 step of `model` from `x` under constant input `u` for `dt` seconds.
pub fn rk4_step(model: &Model, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    debug_assert!(dt > 0.0);
    let mut out = vec![0.0; model.state_dim()];
    model.step_generic(x, u, dt, &mut out);
    out
}

/// RK4 step without the final quaternion renormalization.
pub fn rk4_step_unnormalized(model: &Model, x: &[f64], u: &[f64], dt: f64) -> Vec<f64> {
    let n = model.state_dim();
    let mut k = [[0.0; MAX_STATE_DIM]; 4];
    let mut tmp = [0.0; MAX_STATE_DIM];
    model.deriv(x, u, &mut k[0][..n]);
    for (stage, scale) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
        for i in 0..n {
            tmp[i] = x[i] + scale * dt * k[stage - 1][i];
        }
        let (_, rest) = k.split_at_mut(stage);
        model.deriv(&tmp[..n], u, &mut rest[0][..n]);
    }
    (0..n)
        .map(|i| x[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect()
}

/// Exact derivatives of the [`rk4_step`] map.
#[derive(Debug, Clone, PartialEq)]
pub struct StepJacobians {
    /// ∂x⁺/∂x, `n_x × n_x`
    pub wrt_state: DMatrix<f64>,
    /// ∂x⁺/∂u, `n_x × n_u`
    pub wrt_input: DMatrix<f64>,
    /// ∂x⁺/∂dt, length `n_x`
    pub wrt_dt: DVector<f64>,
}

/// Derivatives of one RK4 step with respect to state, input and step length.
pub fn rk4_jacobians(model: &Model, x: &[f64], u: &[f64], dt: f64) -> StepJacobians {
    let nx = model.state_dim();
    let nu = model.input_dim();
    let mut y = vec![0.0; nx + nu + 1];
    y[..nx].copy_from_slice(x);
    y[nx..nx + nu].copy_from_slice(u);
    y[nx + nu] = dt;
    let mut next = [0.0; MAX_STATE_DIM];
    let mut jac = vec![0.0; nx * (nx + nu + 1)];
    step_jacobian_packed(model, &y, &mut next[..nx], &mut jac);
    let m = nx + nu + 1;
    StepJacobians {
        wrt_state: DMatrix::from_fn(nx, nx, |r, c| jac[r * m + c]),
        wrt_input: DMatrix::from_fn(nx, nu, |r, c| jac[r * m + nx + c]),
        wrt_dt: DVector::from_fn(nx, |r, _| jac[r * m + nx + nu]),
    }
}

/// Value and row-major Jacobian (`n_x × (n_x+n_u+1)`) of the step map at the
/// packed point `y = [x, u, h]`.
pub(crate) fn step_jacobian_packed(model: &Model, y: &[f64], value: &mut [f64], jac: &mut [f64]) {
    match model {
        Model::PointMass(_) => step_jacobian_impl::<7>(model, y, value, jac),
        Model::Quadrotor(_) => step_jacobian_impl::<18>(model, y, value, jac),
    }
}

fn step_jacobian_impl<const M: usize>(model: &Model, y: &[f64], value: &mut [f64], jac: &mut [f64]) {
    let nx = model.state_dim();
    let nu = model.input_dim();
    debug_assert_eq!(nx + nu + 1, M);
    let vars: [DualSVec64<M>; M] = std::array::from_fn(|i| DualSVec64::<M>::from_re(y[i]).derivative(i));
    let zero = DualSVec64::<M>::from_re(0.0);
    let mut out = [zero; MAX_STATE_DIM];
    model.step_generic(&vars[..nx], &vars[nx..nx + nu], vars[nx + nu], &mut out[..nx]);
    for r in 0..nx {
        value[r] = out[r].re;
        let row = &mut jac[r * M..(r + 1) * M];
        match &out[r].eps.0 {
            Some(d) => row.copy_from_slice(d.as_slice()),
            None => row.fill(0.0),
        }
    }
}

/// Gradient and dense Hessian (`M × M`, row-major) of `weightsᵀ step(y)`.
pub(crate) fn step_weighted_hessian_packed(model: &Model, y: &[f64], weights: &[f64], grad: &mut [f64], hess: &mut [f64]) {
    match model {
        Model::PointMass(_) => step_hessian_impl::<7>(model, y, weights, grad, hess),
        Model::Quadrotor(_) => step_hessian_impl::<18>(model, y, weights, grad, hess),
    }
}

fn step_hessian_impl<const M: usize>(model: &Model, y: &[f64], weights: &[f64], grad: &mut [f64], hess: &mut [f64]) {
    let nx = model.state_dim();
    let nu = model.input_dim();
    let vars: [Dual2SVec64<M>; M] = std::array::from_fn(|i| Dual2SVec64::<M>::from_re(y[i]).derivative(i));
    let zero = Dual2SVec64::<M>::from_re(0.0);
    let mut out = [zero; MAX_STATE_DIM];
    model.step_generic(&vars[..nx], &vars[nx..nx + nu], vars[nx + nu], &mut out[..nx]);
    let mut total = zero;
    for r in 0..nx {
        if weights[r] != 0.0 {
            total += out[r] * weights[r];
        }
    }
    let g = total.v1.clone().unwrap_generic(U1, nalgebra::Const::<M>);
    grad[..M].copy_from_slice(g.as_slice());
    let h = total.v2.unwrap_generic(nalgebra::Const::<M>, nalgebra::Const::<M>);
    // column-major storage of a symmetric matrix reads the same row-major
    hess[..M * M].copy_from_slice(h.as_slice());
}

/// Integrates a sequence of piecewise-constant inputs from `x0`.
pub fn rollout(model: &Model, x0: &[f64], inputs: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.to_vec());
    for u in inputs {
        let next = rk4_step(model, states.last().unwrap(), u, dt);
        states.push(next);
    }
    states
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad() -> QuadParams {
        QuadParams::default()
    }

    #[test]
    fn mix_symmetric_thrusts_cancel_torque() {
        let w = mix_rotors(&RotorThrusts { f: [1.0; 4] }, &quad());
        assert_eq!(w.f_t, [0.0, 0.0, 4.0]);
        assert_abs_diff_eq!(w.tau[0], 0.0);
        assert_abs_diff_eq!(w.tau[1], 0.0);
        assert_abs_diff_eq!(w.tau[2], 0.0);
    }

    #[test]
    fn mix_roll_and_yaw_examples() {
        let w = mix_rotors(&RotorThrusts { f: [2.0, 1.0, 1.0, 2.0] }, &quad());
        assert_eq!(w.f_t, [0.0, 0.0, 6.0]);
        assert_abs_diff_eq!(w.tau[0], 0.15 / 2f64.sqrt() * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.tau[0], 0.21213, epsilon = 1e-5);
        assert_abs_diff_eq!(w.tau[1], 0.0);
        assert_abs_diff_eq!(w.tau[2], 0.0);

        let w = mix_rotors(&RotorThrusts { f: [1.0, 0.0, 1.0, 0.0] }, &quad());
        assert_eq!(w.f_t, [0.0, 0.0, 2.0]);
        assert_abs_diff_eq!(w.tau[0], 0.0);
        assert_abs_diff_eq!(w.tau[1], 0.0);
        assert_abs_diff_eq!(w.tau[2], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = quad();
        let hover = p.hover_thrust();
        assert_abs_diff_eq!(hover, 2.0847, epsilon = 1e-4);
        let d = quad_deriv(&QuadState::hover_at([1.0, 2.0, 5.0]), &RotorThrusts { f: [hover; 4] }, &p);
        for v in d {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn free_fall() {
        let d = quad_deriv(&QuadState::hover_at([0.0; 3]), &RotorThrusts { f: [0.0; 4] }, &quad());
        assert_eq!(&d[7..10], &[0.0, 0.0, -9.81]);
        assert_eq!(&d[10..13], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_axis_rotation_has_no_gyroscopic_torque() {
        let mut x = QuadState::hover_at([0.0; 3]);
        x.w = [1.0, 0.0, 0.0];
        let d = quad_deriv(&x, &RotorThrusts { f: [0.0; 4] }, &quad());
        assert_eq!(&d[10..13], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn point_mass_derivative_is_velocity_then_input() {
        let zero = PointMassState { p: [0.0; 2], v: [0.0; 2] };
        assert_eq!(point_mass_deriv(&zero, [0.0, 0.0]), [0.0; 4]);
        let x = PointMassState { p: [1.0, 2.0], v: [3.0, 4.0] };
        assert_eq!(point_mass_deriv(&x, [5.0, 6.0]), [3.0, 4.0, 5.0, 6.0]);
        let x = PointMassState { p: [0.0, 0.0], v: [1.0, 0.0] };
        assert_eq!(point_mass_deriv(&x, [0.0, -1.0]), [1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn rk4_is_exact_for_double_integrator() {
        let m = Model::PointMass(PointMassParams::default());
        let x = rk4_step(&m, &[0.0; 4], &[1.0, 0.0], 0.1);
        assert_abs_diff_eq!(x[0], 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 0.0);
        assert_abs_diff_eq!(x[2], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(x[3], 0.0);
    }

    #[test]
    fn quad_hover_step_is_fixed_point() {
        let p = quad();
        let m = Model::Quadrotor(p);
        let x0 = QuadState::hover_at([0.0, 0.0, 5.0]).to_vec();
        for dt in [0.001, 0.02, 0.05] {
            let x1 = rk4_step(&m, &x0, &m.rest_input(), dt);
            for (a, b) in x0.iter().zip(&x1) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn double_integrator_jacobians_match_closed_form() {
        let m = Model::PointMass(PointMassParams::default());
        let dt = 0.03;
        let j = rk4_jacobians(&m, &[0.3, -1.0, 2.0, 0.5], &[1.0, -4.0], dt);
        let expected_x = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, dt, 0.0, //
            0.0, 1.0, 0.0, dt, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ]);
        let expected_u = DMatrix::from_row_slice(4, 2, &[
            0.5 * dt * dt, 0.0, //
            0.0, 0.5 * dt * dt, //
            dt, 0.0, //
            0.0, dt,
        ]);
        assert!((j.wrt_state - expected_x).amax() < 1e-15);
        assert!((j.wrt_input - expected_u).amax() < 1e-15);
    }

    #[test]
    fn hover_thrust_sensitivities_are_symmetric_in_z() {
        let m = Model::Quadrotor(quad());
        let x0 = QuadState::hover_at([0.0, 0.0, 5.0]).to_vec();
        let j = rk4_jacobians(&m, &x0, &m.rest_input(), 0.02);
        let vz = quad_index::VEL + 2;
        let first = j.wrt_input[(vz, 0)];
        assert!(first > 0.0);
        for c in 1..4 {
            assert_abs_diff_eq!(j.wrt_input[(vz, c)], first, epsilon = 1e-15);
        }
    }

    #[test]
    fn rollout_of_bang_bang_reaches_target_at_rest() {
        let m = Model::PointMass(PointMassParams::default());
        let dt = 0.02;
        let inputs: Vec<Vec<f64>> = (0..100)
            .map(|i| if i < 50 { vec![10.0, 10.0] } else { vec![-10.0, -10.0] })
            .collect();
        let xs = rollout(&m, &[0.0; 4], &inputs, dt);
        assert_eq!(xs.len(), 101);
        let last = xs.last().unwrap();
        assert_abs_diff_eq!(last[0], 10.0, epsilon = 1e-10);
        assert_abs_diff_eq!(last[1], 10.0, epsilon = 1e-10);
        assert_abs_diff_eq!(last[2], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(last[3], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn rollouts_at_rest_stay_put() {
        let m = Model::PointMass(PointMassParams::default());
        let xs = rollout(&m, &[1.0, 2.0, 0.0, 0.0], &vec![vec![0.0, 0.0]; 20], 0.05);
        assert!(xs.iter().all(|x| x == &vec![1.0, 2.0, 0.0, 0.0]));

        let q = Model::Quadrotor(quad());
        let x0 = QuadState::hover_at([3.0, 4.0, 5.0]).to_vec();
        let xs = rollout(&q, &x0, &vec![q.rest_input(); 50], 0.02);
        for x in &xs {
            for (a, b) in x.iter().zip(&x0) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }
}
