//! Linear time-varying model predictive steering control.
//!
//! A dynamic bicycle model is linearized around straight-line driving at
//! the current speed, discretized exactly by zero-order hold, extended by
//! a transport chain for actuation delay, and condensed into a small dense
//! unconstrained QP in the steering-rate sequence. The QP solves by a
//! Cholesky factorization; the applied command is the accumulated first
//! rate step. Inequality constraints are configured but not enforced —
//! the returned steering is saturated post-hoc as a safety clamp.

pub mod expm;

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::geometry::{wrap_radians, Pose2D};
use crate::planner::CenterlinePath;

#[allow(unused_imports)]
use num_traits::Float;

pub use expm::expm;

/// Bicycle-model parameters. Cornering stiffnesses are *negative* by
/// convention here: with `C < 0` the lateral damping terms of the linear
/// model are stable and the steering input gain `-C_f/m` is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BicycleParams {
    /// Vehicle mass, kg.
    pub m: f64,
    /// Yaw inertia, kg m^2.
    pub i_z: f64,
    /// Distance front axle to center of gravity, m.
    pub l_f: f64,
    /// Distance rear axle to center of gravity, m.
    pub l_r: f64,
    /// Front cornering stiffness, N/rad, negative.
    pub c_f: f64,
    /// Rear cornering stiffness, N/rad, negative.
    pub c_r: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self {
            m: 200.0,
            i_z: 120.0,
            l_f: 0.8,
            l_r: 0.8,
            c_f: -50_000.0,
            c_r: -50_000.0,
        }
    }
}

impl BicycleParams {
    pub fn validate(&self) -> Result<(), MpcError> {
        if !(self.m > 0.0 && self.i_z > 0.0 && self.l_f > 0.0 && self.l_r > 0.0) {
            return Err(MpcError::InvalidParams("masses and lengths must be positive"));
        }
        if !(self.c_f < 0.0 && self.c_r < 0.0) {
            return Err(MpcError::InvalidParams(
                "cornering stiffnesses use the negative sign convention",
            ));
        }
        Ok(())
    }
}

/// Continuous-time lateral model `x' = A x + b u` with state
/// `(y, v_y, psi, r)` and steering input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub v_x: f64,
}

/// Discrete-time model, possibly extended by delay chain states.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub ad: DMatrix<f64>,
    pub bd: DVector<f64>,
    /// Sampling time, seconds.
    pub t: f64,
    /// Number of transport-chain entries appended to the base state.
    pub delay_states: usize,
}

impl DiscreteModel {
    pub fn dim(&self) -> usize {
        self.ad.nrows()
    }

    /// Dimension of the physical state block (without the delay chain).
    pub fn base_dim(&self) -> usize {
        self.dim() - self.delay_states
    }
}

/// Controller configuration. The rate and amplitude bounds are retained
/// for the record but not enforced by the solver (see module docs); the
/// amplitude bound is applied as a post-hoc clamp.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MpcConfig {
    /// Horizon length in steps.
    pub n: usize,
    /// Sampling time, seconds.
    pub t: f64,
    /// State weight (on `(y, v_y, psi, r)`).
    pub q: Matrix4<f64>,
    /// Input-rate weight, strictly positive.
    pub r: f64,
    /// Terminal state weight.
    pub p_term: Matrix4<f64>,
    /// Actuation delay compensated by the transport chain, seconds.
    pub t_delay: f64,
    pub du_min: f64,
    pub du_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Below this speed the controller holds the last command.
    pub v_min: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let q = Matrix4::from_diagonal(&Vector4::new(10.0, 0.0, 50.0, 1.0));
        Self {
            n: 65,
            t: 0.02,
            q,
            r: 500.0,
            p_term: q * 5.0,
            t_delay: 0.0,
            du_min: -0.03,
            du_max: 0.03,
            u_min: -0.45,
            u_max: 0.45,
            v_min: 1.0,
        }
    }
}

/// Full solver output of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Optimal input-rate sequence, length N.
    pub du_seq: Vec<f64>,
    /// Accumulated steering angles `u_2 .. u_{N+1}` (before saturation).
    pub u_seq: Vec<f64>,
    /// Predicted states `x_1 .. x_{N+1}` of the (possibly augmented) model.
    pub predicted: Vec<DVector<f64>>,
    /// Objective value at the optimum.
    pub cost: f64,
    /// Max-norm residual of the normal equations.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MpcError {
    /// Speed at or below the 1/v singularity guard.
    SpeedTooLow { v_x: f64, v_min: f64 },
    /// Cholesky factorization hit a non-positive pivot; carries the
    /// 1-based index of the offending leading minor.
    NotPositiveDefinite { minor: usize },
    /// The reference path has no samples.
    EmptyPath,
    InvalidParams(&'static str),
    DimensionMismatch,
}

impl fmt::Display for MpcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpcError::SpeedTooLow { v_x, v_min } => {
                write!(f, "speed {v_x} m/s at or below minimum {v_min} m/s")
            }
            MpcError::NotPositiveDefinite { minor } => {
                write!(f, "Hessian not positive definite at leading minor {minor}")
            }
            MpcError::EmptyPath => write!(f, "reference path is empty"),
            MpcError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
            MpcError::DimensionMismatch => write!(f, "dimension mismatch"),
        }
    }
}

impl core::error::Error for MpcError {}

/// Exact nonlinear lateral/yaw dynamics of the bicycle model.
///
/// State `(y, v_y, psi, r)`, steering `delta`, longitudinal speed `v_x`
/// held as a parameter. Slip angles use `arctan`, so `v_x` must stay away
/// from zero.
pub fn dynamics_nonlinear(
    state: &Vector4<f64>,
    delta: f64,
    v_x: f64,
    p: &BicycleParams,
) -> Result<Vector4<f64>, MpcError> {
    if v_x < 0.1 {
        return Err(MpcError::SpeedTooLow { v_x, v_min: 0.1 });
    }
    let (v_y, psi, r) = (state[1], state[2], state[3]);
    let alpha_f = -delta + ((v_y + p.l_f * r) / v_x).atan();
    let alpha_r = ((v_y - p.l_r * r) / v_x).atan();
    let f_yf = p.c_f * alpha_f;
    let f_yr = p.c_r * alpha_r;
    let cos_d = delta.cos();
    let m_z = p.l_f * f_yf * cos_d - p.l_r * f_yr;
    Ok(Vector4::new(
        v_x * psi.sin() + v_y * psi.cos(),
        (f_yf * cos_d + f_yr) / p.m - v_x * r,
        r,
        m_z / p.i_z,
    ))
}

/// Linearization around straight-line driving at speed `v_x`.
pub fn linearize(p: &BicycleParams, v_x: f64, v_min: f64) -> Result<LinearModel, MpcError> {
    p.validate()?;
    if v_x <= v_min {
        return Err(MpcError::SpeedTooLow { v_x, v_min });
    }
    let (m, iz, lf, lr, cf, cr) = (p.m, p.i_z, p.l_f, p.l_r, p.c_f, p.c_r);
    let v = v_x;
    let a = Matrix4::new(
        0.0, 1.0, v, 0.0, //
        0.0, (cf + cr) / (m * v), 0.0, (lf * cf - lr * cr) / (m * v) - v, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, (lf * cf - lr * cr) / (iz * v), 0.0, (lf * lf * cf + lr * lr * cr) / (iz * v),
    );
    let b = Vector4::new(0.0, -cf / m, 0.0, -lf * cf / iz);
    Ok(LinearModel { a, b, v_x })
}

/// Exact zero-order-hold discretization via the matrix exponential of the
/// augmented `[[A, b], [0, 0]]` block.
pub fn discretize(model: &LinearModel, t: f64) -> DiscreteModel {
    assert!(t > 0.0, "sampling time must be positive");
    let mut aug = DMatrix::zeros(5, 5);
    for i in 0..4 {
        for j in 0..4 {
            aug[(i, j)] = model.a[(i, j)] * t;
        }
        aug[(i, 4)] = model.b[i] * t;
    }
    let e = expm(&aug);
    let ad = DMatrix::from_fn(4, 4, |i, j| e[(i, j)]);
    let bd = DVector::from_fn(4, |i, _| e[(i, 4)]);
    DiscreteModel {
        ad,
        bd,
        t,
        delay_states: 0,
    }
}

/// Extends the discrete model by a transport chain of past inputs to
/// compensate a real-valued actuation delay `t_delay`.
///
/// The chain gets `floor(t_delay / T) + 1` entries; the plant input is the
/// linear interpolation between the two oldest entries weighted by the
/// residual part of the delay. `t_delay == 0` returns the model unchanged.
pub fn augment_delay(model: &DiscreteModel, t_delay: f64) -> DiscreteModel {
    assert!(t_delay >= 0.0, "delay must be non-negative");
    assert_eq!(model.delay_states, 0, "model already has a delay chain");
    if t_delay == 0.0 {
        return model.clone();
    }
    let t = model.t;
    let d = ((t_delay / t) + 1e-9).floor() as usize;
    let rho = (t_delay - d as f64 * t).max(0.0);
    let w_old = rho / t; // weight of the older sample u_{k-d-1}
    let w_new = 1.0 - w_old;
    let chain = d + 1;
    let nx = model.dim();
    let n_aug = nx + chain;

    let mut ad = DMatrix::zeros(n_aug, n_aug);
    let mut bd = DVector::zeros(n_aug);
    ad.view_mut((0, 0), (nx, nx)).copy_from(&model.ad);
    if d == 0 {
        // effective input blends the fresh command with the newest chain entry
        for i in 0..nx {
            bd[i] = model.bd[i] * w_new;
            ad[(i, nx)] += model.bd[i] * w_old;
        }
    } else {
        for i in 0..nx {
            ad[(i, nx + d - 1)] += model.bd[i] * w_new;
            ad[(i, nx + d)] += model.bd[i] * w_old;
        }
    }
    // shift register: z_1 <- u, z_i <- z_{i-1}
    bd[nx] = 1.0;
    for i in 1..chain {
        ad[(nx + i, nx + i - 1)] = 1.0;
    }
    DiscreteModel {
        ad,
        bd,
        t,
        delay_states: chain,
    }
}

/// Reference states over the horizon, expressed in the prediction frame
/// anchored at the current pose.
///
/// Step `k` (1-based, through `N+1`) references the path point at arc
/// length `s_0 + k v_x T`: lateral offset of the path in the vehicle
/// frame, zero lateral velocity, relative path heading (continued without
/// wrapping jumps along the horizon), and the feedforward yaw rate
/// `kappa * v_x`. Returns the truncation flag when an open path ends
/// inside the horizon; references then hold the final sample.
pub fn build_reference(
    path: &CenterlinePath,
    pose: &Pose2D,
    v_x: f64,
    n: usize,
    t: f64,
) -> Result<(Vec<Vector4<f64>>, bool), MpcError> {
    if path.is_empty() {
        return Err(MpcError::EmptyPath);
    }
    let s0 = path.project(pose.position());
    let mut refs = Vec::with_capacity(n + 1);
    let mut truncated = false;
    let mut prev_heading_err: Option<f64> = None;
    for k in 1..=(n + 1) {
        let s = s0 + k as f64 * v_x * t;
        if !path.closed && s > path.total_length {
            truncated = true;
        }
        let sample = path.sample_at(s);
        let q = crate::geometry::world_to_body(pose, sample.position);
        let raw = sample.heading - pose.psi;
        let heading_err = match prev_heading_err {
            None => wrap_radians(raw),
            // continue the angle without 2*pi jumps along the horizon
            Some(prev) => prev + wrap_radians(raw - prev),
        };
        prev_heading_err = Some(heading_err);
        refs.push(Vector4::new(q.y, 0.0, heading_err, sample.curvature * v_x));
    }
    Ok((refs, truncated))
}

/// Condenses the QP: eliminates the states through the dynamics, leaving a
/// dense problem in the input rates. The cost of any rate sequence `du`
/// equals `0.5 du' H du + g' du + const`.
///
/// `x1` is the (augmented) initial state, `u1` the currently applied
/// steering, `x_ref` the `N+1` references for the weighted state block.
pub fn condense(
    model: &DiscreteModel,
    config: &MpcConfig,
    x1: &DVector<f64>,
    u1: f64,
    x_ref: &[Vector4<f64>],
) -> Result<(DMatrix<f64>, DVector<f64>), MpcError> {
    let n = config.n;
    let nx = model.dim();
    if x1.len() != nx || x_ref.len() != n + 1 {
        return Err(MpcError::DimensionMismatch);
    }

    // step responses: Gamma_m = sum_{t=0}^{m-1} Ad^t bd, m = 0..N-1
    let mut gammas: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut g_acc = DVector::zeros(nx);
    gammas.push(g_acc.clone());
    for _ in 1..n {
        g_acc = &model.ad * &g_acc + &model.bd;
        gammas.push(g_acc.clone());
    }

    // free response under constant u1
    let mut free = Vec::with_capacity(n + 1);
    let mut x = x1.clone();
    free.push(x.clone());
    for _ in 0..n {
        x = &model.ad * &x + &model.bd * u1;
        free.push(x.clone());
    }

    // only the 4 physical states carry weight; blocks reduce to rows 0..4
    let mut m4 = DMatrix::zeros(4 * n, n);
    let mut err = DVector::zeros(4 * n);
    for k in 2..=(n + 1) {
        let rk = k - 2;
        for i in 1..=n {
            let m = k as isize - 1 - i as isize;
            if m >= 1 {
                let gamma = &gammas[m as usize];
                for row in 0..4 {
                    m4[(4 * rk + row, i - 1)] = gamma[row];
                }
            }
        }
        let ref_k = &x_ref[k - 1];
        for row in 0..4 {
            err[4 * rk + row] = free[k - 1][row] - ref_k[row];
        }
    }

    // apply the block-diagonal weights: Q for k = 2..N, P for k = N+1
    let mut wm = m4.clone();
    let mut we = err.clone();
    for rk in 0..n {
        let w = if rk == n - 1 { &config.p_term } else { &config.q };
        let rows = 4 * rk;
        let block = m4.view((rows, 0), (4, n));
        wm.view_mut((rows, 0), (4, n)).copy_from(&(w * block));
        let eblk = err.view((rows, 0), (4, 1));
        we.view_mut((rows, 0), (4, 1)).copy_from(&(w * eblk));
    }

    let mut h = m4.transpose() * wm * 2.0;
    for i in 0..n {
        h[(i, i)] += 2.0 * config.r;
    }
    // enforce exact symmetry against rounding
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    let g = m4.transpose() * we * 2.0;
    Ok((h, g))
}

/// Solves `H du = -g` by a Cholesky factorization; fails with the index of
/// the first non-positive leading minor when `H` is not positive definite.
pub fn solve_unconstrained(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>, MpcError> {
    let n = h.nrows();
    if h.ncols() != n || g.len() != n {
        return Err(MpcError::DimensionMismatch);
    }
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(MpcError::NotPositiveDefinite { minor: j + 1 });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = h[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    // forward: L y = -g
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut s = -g[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    // backward: L' x = y
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Current lateral measurement fed to the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralMeasurement {
    /// Pose estimate (world frame).
    pub pose: Pose2D,
    /// Lateral velocity, m/s.
    pub v_y: f64,
    /// Yaw rate, rad/s.
    pub r: f64,
    /// Longitudinal speed, m/s.
    pub v_x: f64,
}

/// Result of one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcStepOutput {
    /// Commanded steering angle (after the safety clamp).
    pub steering: f64,
    /// First rate step of the solution.
    pub du1: f64,
    pub cost: f64,
    pub residual: f64,
    /// The open path ended inside the horizon.
    pub truncated_horizon: bool,
    /// The post-hoc amplitude clamp engaged.
    pub saturated: bool,
    /// Set when a stage failed and the last command is held.
    pub held: Option<MpcError>,
    /// Full solution for logging; absent when held.
    pub solution: Option<MpcSolution>,
}

/// The predictive steering controller. Owns the last commanded angle and
/// the short input history backing the delay chain.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub config: MpcConfig,
    pub params: BicycleParams,
    last_u: f64,
    /// Past commanded inputs, newest first.
    history: VecDeque<f64>,
}

impl MpcController {
    pub fn new(config: MpcConfig, params: BicycleParams) -> Self {
        assert!(config.n >= 1, "horizon must be at least one step");
        assert!(config.r > 0.0, "input-rate weight must be positive");
        assert!(config.t > 0.0);
        Self {
            config,
            params,
            last_u: 0.0,
            history: VecDeque::new(),
        }
    }

    pub fn last_steering(&self) -> f64 {
        self.last_u
    }

    fn hold(&self, error: MpcError) -> MpcStepOutput {
        MpcStepOutput {
            steering: self.last_u,
            du1: 0.0,
            cost: f64::NAN,
            residual: f64::NAN,
            truncated_horizon: false,
            saturated: false,
            held: Some(error),
            solution: None,
        }
    }

    /// One controller step: linearize at the current speed, discretize,
    /// augment the delay chain, build the reference, condense, solve, and
    /// return the accumulated next steering angle.
    pub fn step(&mut self, meas: &LateralMeasurement, path: &CenterlinePath) -> MpcStepOutput {
        let cfg = self.config.clone();
        if meas.v_x < cfg.v_min {
            return self.hold(MpcError::SpeedTooLow {
                v_x: meas.v_x,
                v_min: cfg.v_min,
            });
        }
        let linear = match linearize(&self.params, meas.v_x, 0.5 * cfg.v_min) {
            Ok(m) => m,
            Err(e) => return self.hold(e),
        };
        let base = discretize(&linear, cfg.t);
        let model = augment_delay(&base, cfg.t_delay);

        let (refs, truncated) = match build_reference(path, &meas.pose, meas.v_x, cfg.n, cfg.t) {
            Ok(r) => r,
            Err(e) => return self.hold(e),
        };

        // prediction frame anchored at the pose: y = 0, psi = 0
        let nx = model.dim();
        let mut x1 = DVector::zeros(nx);
        x1[1] = meas.v_y;
        x1[3] = meas.r;
        for i in 0..model.delay_states {
            x1[4 + i] = self.history.get(i).copied().unwrap_or(self.last_u);
        }

        let (h, g) = match condense(&model, &cfg, &x1, self.last_u, &refs) {
            Ok(hg) => hg,
            Err(e) => return self.hold(e),
        };
        let du = match solve_unconstrained(&h, &g) {
            Ok(du) => du,
            Err(e) => return self.hold(e),
        };
        let residual = (&h * &du + &g).abs().max();

        // accumulate u_{k+1} = u_k + du_k (exact, Eq. of the formulation)
        let mut u_seq = Vec::with_capacity(cfg.n);
        let mut u = self.last_u;
        for k in 0..cfg.n {
            u += du[k];
            u_seq.push(u);
        }

        // rollout and objective for the log
        let mut predicted = Vec::with_capacity(cfg.n + 1);
        predicted.push(x1.clone());
        let mut cost = 0.0;
        let mut xk = x1.clone();
        for k in 1..=cfg.n {
            let u_k = if k == 1 { self.last_u } else { u_seq[k - 2] };
            // stage cost at x_k
            cost += stage_cost(&xk, &refs[k - 1], &cfg.q) + cfg.r * du[k - 1] * du[k - 1];
            xk = &model.ad * &xk + &model.bd * u_k;
            predicted.push(xk.clone());
        }
        cost += stage_cost(&xk, &refs[cfg.n], &cfg.p_term);

        let raw = u_seq[0];
        let steering = raw.clamp(cfg.u_min, cfg.u_max);
        let saturated = steering != raw;
        self.last_u = steering;
        self.history.push_front(steering);
        let keep = ((cfg.t_delay / cfg.t) + 2.0) as usize + 2;
        self.history.truncate(keep);

        MpcStepOutput {
            steering,
            du1: du[0],
            cost,
            residual,
            truncated_horizon: truncated,
            saturated,
            held: None,
            solution: Some(MpcSolution {
                du_seq: du.iter().copied().collect(),
                u_seq,
                predicted,
                cost,
                residual,
            }),
        }
    }

    /// Resets the internal steering state (used between scenario runs).
    pub fn reset(&mut self, steering: f64) {
        self.last_u = steering;
        self.history.clear();
    }
}

fn stage_cost(x: &DVector<f64>, reference: &Vector4<f64>, w: &Matrix4<f64>) -> f64 {
    let e = Vector4::new(
        x[0] - reference[0],
        x[1] - reference[1],
        x[2] - reference[2],
        x[3] - reference[3],
    );
    (e.transpose() * w * e)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::build_path;
    use crate::geometry::Point2;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn params() -> BicycleParams {
        BicycleParams::default()
    }

    #[test]
    fn dynamics_equilibrium_and_sign() {
        let zero = Vector4::zeros();
        let d = dynamics_nonlinear(&zero, 0.0, 10.0, &params()).unwrap();
        assert_relative_eq!(d.norm(), 0.0);

        // positive steering with negative stiffness turns left
        let d = dynamics_nonlinear(&zero, 0.1, 10.0, &params()).unwrap();
        assert!(d[1] > 0.0, "v_y' = {}", d[1]);
        assert!(d[3] > 0.0, "r' = {}", d[3]);

        assert!(dynamics_nonlinear(&zero, 0.0, 0.05, &params()).is_err());
    }

    #[test]
    fn linearize_matches_equations() {
        let p = params();
        let v = 12.0;
        let m = linearize(&p, v, 1.0).unwrap();
        assert_relative_eq!(m.a[(0, 1)], 1.0);
        assert_relative_eq!(m.a[(0, 2)], v);
        assert_relative_eq!(m.a[(1, 1)], (p.c_f + p.c_r) / (p.m * v));
        assert_relative_eq!(m.b[1], -p.c_f / p.m);
        assert_relative_eq!(m.b[3], -p.l_f * p.c_f / p.i_z);
        assert!(m.a[(1, 1)] < 0.0, "damping must be stable");
        assert!(m.b[1] > 0.0, "input gain must be positive");

        assert!(linearize(&p, 0.5, 1.0).is_err());
    }

    #[test]
    fn linearize_matches_finite_differences() {
        let p = params();
        let v = 9.0;
        let m = linearize(&p, v, 1.0).unwrap();
        let h = 1e-6;
        for col in 0..4 {
            let mut plus = Vector4::zeros();
            plus[col] = h;
            let mut minus = Vector4::zeros();
            minus[col] = -h;
            let fd = (dynamics_nonlinear(&plus, 0.0, v, &p).unwrap()
                - dynamics_nonlinear(&minus, 0.0, v, &p).unwrap())
                / (2.0 * h);
            for row in 0..4 {
                assert_relative_eq!(m.a[(row, col)], fd[row], epsilon = 1e-4, max_relative = 1e-5);
            }
        }
        let fd_b = (dynamics_nonlinear(&Vector4::zeros(), h, v, &p).unwrap()
            - dynamics_nonlinear(&Vector4::zeros(), -h, v, &p).unwrap())
            / (2.0 * h);
        for row in 0..4 {
            assert_relative_eq!(m.b[row], fd_b[row], epsilon = 1e-4, max_relative = 1e-5);
        }
    }

    #[test]
    fn discretize_zero_dynamics() {
        let model = LinearModel {
            a: Matrix4::zeros(),
            b: Vector4::new(0.0, 1.0, 0.0, 2.0),
            v_x: 5.0,
        };
        let d = discretize(&model, 0.1);
        assert_relative_eq!(d.ad.clone(), DMatrix::identity(4, 4), epsilon = 1e-14);
        assert_relative_eq!(d.bd[1], 0.1, epsilon = 1e-14);
        assert_relative_eq!(d.bd[3], 0.2, epsilon = 1e-14);
    }

    #[test]
    fn discretize_semigroup() {
        let m = linearize(&params(), 10.0, 1.0).unwrap();
        let full = discretize(&m, 0.02);
        let half = discretize(&m, 0.01);
        let composed_a = &half.ad * &half.ad;
        let composed_b = &half.ad * &half.bd + &half.bd;
        assert_relative_eq!(composed_a, full.ad, epsilon = 1e-10);
        assert_relative_eq!(composed_b, full.bd, epsilon = 1e-10);
    }

    #[test]
    fn delay_chain_sizes() {
        let m = linearize(&params(), 10.0, 1.0).unwrap();
        let d = discretize(&m, 0.02);
        let same = augment_delay(&d, 0.0);
        assert_eq!(same.delay_states, 0);
        assert_eq!(same.dim(), 4);

        // 45 ms at 20 ms sampling: floor(2.25) + 1 = 3 chain entries
        let aug = augment_delay(&d, 0.045);
        assert_eq!(aug.delay_states, 3);
        assert_eq!(aug.dim(), 7);
    }

    #[test]
    fn exact_two_step_delay_shifts_response() {
        let m = linearize(&params(), 10.0, 1.0).unwrap();
        let d = discretize(&m, 0.02);
        let aug = augment_delay(&d, 0.04); // exactly 2 steps

        // simulate both models under a unit step input
        let steps = 8;
        let mut x_plain = DVector::zeros(4);
        let mut plain = vec![x_plain.clone()];
        for _ in 0..steps {
            x_plain = &d.ad * &x_plain + &d.bd * 1.0;
            plain.push(x_plain.clone());
        }
        let mut x_aug = DVector::zeros(aug.dim());
        let mut delayed = vec![x_aug.rows(0, 4).clone_owned()];
        for _ in 0..steps {
            x_aug = &aug.ad * &x_aug + &aug.bd * 1.0;
            delayed.push(x_aug.rows(0, 4).clone_owned());
        }
        // the delayed response at k equals the plain response at k - 2
        for k in 2..=steps {
            assert_relative_eq!(delayed[k], plain[k - 2], epsilon = 1e-12);
        }
    }

    fn straight_path() -> CenterlinePath {
        let chain: Vec<Point2> = (0..200).map(|i| Point2::new(i as f64 * 0.5, 0.0)).collect();
        build_path(&chain, false)
    }

    #[test]
    fn reference_on_straight_path() {
        let path = straight_path();
        let pose = Pose2D::new(5.0, 0.0, 0.0);
        let (refs, truncated) = build_reference(&path, &pose, 10.0, 20, 0.02).unwrap();
        assert!(!truncated);
        for r in &refs {
            assert_relative_eq!(r[0], 0.0, epsilon = 1e-9);
            assert_relative_eq!(r[2], 0.0, epsilon = 1e-9);
            assert_relative_eq!(r[3], 0.0, epsilon = 1e-9);
        }

        // 0.5 m right of the path: path appears 0.5 m to the left
        let pose = Pose2D::new(5.0, -0.5, 0.0);
        let (refs, _) = build_reference(&path, &pose, 10.0, 20, 0.02).unwrap();
        for r in &refs {
            assert_relative_eq!(r[0], 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn reference_on_circle_feeds_forward_yaw_rate() {
        let n = 720;
        let chain: Vec<Point2> = (0..n)
            .map(|i| {
                let th = i as f64 / n as f64 * 2.0 * core::f64::consts::PI;
                Point2::new(20.0 * th.cos(), 20.0 * th.sin())
            })
            .collect();
        let path = build_path(&chain, true);
        let pose = Pose2D::new(20.0, 0.0, core::f64::consts::PI / 2.0);
        let v = 8.0;
        let (refs, _) = build_reference(&path, &pose, v, 30, 0.02).unwrap();
        for r in refs.iter().skip(1) {
            assert_relative_eq!(r[3], 0.05 * v, max_relative = 0.03);
        }
    }

    #[test]
    fn condense_gradient_zero_on_reference() {
        let p = params();
        let m = linearize(&p, 10.0, 1.0).unwrap();
        let d = discretize(&m, 0.02);
        let cfg = MpcConfig {
            n: 12,
            ..Default::default()
        };
        let x1 = DVector::zeros(4);
        let refs = vec![Vector4::zeros(); 13];
        let (h, g) = condense(&d, &cfg, &x1, 0.0, &refs).unwrap();
        assert_relative_eq!(g.abs().max(), 0.0, epsilon = 1e-12);
        let du = solve_unconstrained(&h, &g).unwrap();
        assert_relative_eq!(du.abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn condense_matches_rolled_out_cost() {
        // cost identity J(du) - J(0) = 0.5 du'H du + g'du on random rates
        let p = params();
        let m = linearize(&p, 8.0, 1.0).unwrap();
        let d = discretize(&m, 0.02);
        let cfg = MpcConfig {
            n: 7,
            ..Default::default()
        };
        let x1 = DVector::from_vec(vec![0.3, -0.2, 0.1, 0.05]);
        let u1 = 0.02;
        let refs: Vec<Vector4<f64>> = (0..8)
            .map(|k| Vector4::new(0.1 * k as f64, 0.0, 0.02 * k as f64, 0.01))
            .collect();
        let (h, g) = condense(&d, &cfg, &x1, u1, &refs).unwrap();

        let rollout_cost = |du: &[f64]| -> f64 {
            let mut cost = 0.0;
            let mut x = x1.clone();
            let mut u = u1;
            let mut us = vec![u1];
            for k in 0..cfg.n {
                u += du[k];
                us.push(u);
            }
            for k in 1..=cfg.n {
                cost += stage_cost(&x, &refs[k - 1], &cfg.q) + cfg.r * du[k - 1] * du[k - 1];
                x = &d.ad * &x + &d.bd * us[k - 1];
            }
            cost + stage_cost(&x, &refs[cfg.n], &cfg.p_term)
        };

        let zero = vec![0.0; cfg.n];
        let j0 = rollout_cost(&zero);
        let mut seed = 42u64;
        for _ in 0..10 {
            let du: Vec<f64> = (0..cfg.n)
                .map(|_| {
                    seed ^= seed << 13;
                    seed ^= seed >> 7;
                    seed ^= seed << 17;
                    ((seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.02
                })
                .collect();
            let dv = DVector::from_vec(du.clone());
            let quad = 0.5 * (dv.transpose() * &h * &dv)[(0, 0)] + g.dot(&dv);
            let direct = rollout_cost(&du) - j0;
            assert_relative_eq!(quad, direct, epsilon = 1e-9, max_relative = 1e-7);
        }
    }

    #[test]
    fn solver_basics() {
        let h = DMatrix::identity(5, 5);
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0]);
        let x = solve_unconstrained(&h, &g).unwrap();
        assert_relative_eq!(x, -g.clone(), epsilon = 1e-14);

        let zero = DVector::zeros(5);
        let x = solve_unconstrained(&h, &zero).unwrap();
        assert_relative_eq!(x.abs().max(), 0.0);

        // indefinite matrix: error names the failing leading minor
        let mut bad = DMatrix::identity(4, 4);
        bad[(2, 2)] = -1.0;
        match solve_unconstrained(&bad, &DVector::zeros(4)) {
            Err(MpcError::NotPositiveDefinite { minor }) => assert_eq!(minor, 3),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn doubling_r_shrinks_rate_norm() {
        let p = params();
        let m = linearize(&p, 10.0, 1.0).unwrap();
        let d = discretize(&m, 0.02);
        let mut cfg = MpcConfig {
            n: 20,
            ..Default::default()
        };
        let x1 = DVector::from_vec(vec![0.8, 0.0, 0.2, 0.0]);
        let refs = vec![Vector4::zeros(); 21];
        let (h1, g1) = condense(&d, &cfg, &x1, 0.0, &refs).unwrap();
        let du1 = solve_unconstrained(&h1, &g1).unwrap();
        cfg.r *= 2.0;
        let (h2, g2) = condense(&d, &cfg, &x1, 0.0, &refs).unwrap();
        let du2 = solve_unconstrained(&h2, &g2).unwrap();
        assert!(du2.norm() < du1.norm());
    }

    #[test]
    fn controller_holds_below_minimum_speed() {
        let mut controller = MpcController::new(MpcConfig::default(), params());
        controller.reset(0.1);
        let out = controller.step(
            &LateralMeasurement {
                pose: Pose2D::new(0.0, 0.0, 0.0),
                v_y: 0.0,
                r: 0.0,
                v_x: 0.3,
            },
            &straight_path(),
        );
        assert!(matches!(out.held, Some(MpcError::SpeedTooLow { .. })));
        assert_relative_eq!(out.steering, 0.1);
    }

    #[test]
    fn controller_steers_straight_on_reference() {
        let mut controller = MpcController::new(MpcConfig::default(), params());
        let out = controller.step(
            &LateralMeasurement {
                pose: Pose2D::new(10.0, 0.0, 0.0),
                v_y: 0.0,
                r: 0.0,
                v_x: 10.0,
            },
            &straight_path(),
        );
        assert!(out.held.is_none());
        assert!(out.du1.abs() < 1e-6, "du1 = {}", out.du1);
        assert!(out.steering.abs() < 1e-6);
        assert!(out.residual < 1e-8);
    }
}
