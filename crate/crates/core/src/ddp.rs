//! Differential dynamic programming over the hybrid pusher-slider rollout.
//!
//! The backward pass uses the Gauss-Newton (iLQR) expansion: second-order
//! terms of the dynamics are dropped and only the frozen-mode Jacobians from
//! [`pushdyn::linearize`] enter the Q-function. Forward passes re-run the mode
//! guard, so the contact schedule can change between iterations.

use nalgebra::{Cholesky, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pushdyn::{
    self, state_diff, Control, ContactMode, ControlVec, DynamicsError, HybridState, SliderParams, StateVec,
    CONTROL_DIM, STATE_DIM,
};
use crate::scalar::Real;

pub type Gain<T> = SMatrix<T, CONTROL_DIM, STATE_DIM>;
type StateMat<T> = SMatrix<T, STATE_DIM, STATE_DIM>;
type ControlMat<T> = SMatrix<T, CONTROL_DIM, CONTROL_DIM>;

const FD_STEP: f64 = 1e-6;
const FD_HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DdpError {
    #[error("rollout failed at step {step}: {source}")]
    Rollout { step: usize, source: DynamicsError },
    #[error("control sequence is empty")]
    EmptyControls,
    #[error("mode schedule length {got} does not match {expected} controls")]
    ScheduleLength { expected: usize, got: usize },
}

/// A rolled-out trajectory: `T + 1` states, `T` controls and the modes used.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<HybridState<T>>,
    pub controls: Vec<Control<T>>,
    pub modes: Vec<ContactMode>,
    pub dt: T,
    pub total_cost: T,
}

impl<T: Real> Trajectory<T> {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &HybridState<T> {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn state_vectors(&self) -> Vec<StateVec<T>> {
        self.states.iter().map(HybridState::to_vector).collect()
    }

    pub fn control_vectors(&self) -> Vec<ControlVec<T>> {
        self.controls.iter().map(Control::to_vector).collect()
    }

    /// Recomputes `total_cost` under `cost`.
    pub fn evaluate(&mut self, cost: &(impl CostModel<T> + ?Sized)) {
        self.total_cost = total_cost(cost, &self.state_vectors(), &self.control_vectors());
    }
}

/// First and second derivatives of a stage cost.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDerivatives<T: Real> {
    pub lx: StateVec<T>,
    pub lu: ControlVec<T>,
    pub lxx: StateMat<T>,
    pub luu: ControlMat<T>,
    pub lux: Gain<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDerivatives<T: Real> {
    pub lx: StateVec<T>,
    pub lxx: StateMat<T>,
}

/// Stage and terminal cost with derivative access.
///
/// The provided derivative methods fall back to central finite differences.
pub trait CostModel<T: Real>: Send + Sync {
    fn stage(&self, x: &StateVec<T>, u: &ControlVec<T>, t: usize) -> T;

    fn terminal(&self, x: &StateVec<T>) -> T;

    fn stage_derivatives(&self, x: &StateVec<T>, u: &ControlVec<T>, t: usize) -> StageDerivatives<T> {
        numeric_stage_derivatives(self, x, u, t)
    }

    fn terminal_derivatives(&self, x: &StateVec<T>) -> TerminalDerivatives<T> {
        numeric_terminal_derivatives(self, x)
    }
}

/// Stacked `(x, u)` view used by the finite-difference stencils.
fn split<T: Real>(z: &SMatrix<T, 9, 1>) -> (StateVec<T>, ControlVec<T>) {
    (z.fixed_rows::<STATE_DIM>(0).into_owned(), z.fixed_rows::<CONTROL_DIM>(STATE_DIM).into_owned())
}

fn numeric_gradient<T: Real>(f: &impl Fn(&SMatrix<T, 9, 1>) -> T, z: &SMatrix<T, 9, 1>, h: T) -> SMatrix<T, 9, 1> {
    let mut g = SMatrix::<T, 9, 1>::zeros();
    for i in 0..9 {
        let (mut zp, mut zm) = (*z, *z);
        zp[i] += h;
        zm[i] -= h;
        g[i] = (f(&zp) - f(&zm)) / (h + h);
    }
    g
}

pub fn numeric_stage_derivatives<T: Real, C: CostModel<T> + ?Sized>(
    cost: &C,
    x: &StateVec<T>,
    u: &ControlVec<T>,
    t: usize,
) -> StageDerivatives<T> {
    let mut z = SMatrix::<T, 9, 1>::zeros();
    z.fixed_rows_mut::<STATE_DIM>(0).copy_from(x);
    z.fixed_rows_mut::<CONTROL_DIM>(STATE_DIM).copy_from(u);
    let f = |z: &SMatrix<T, 9, 1>| {
        let (x, u) = split(z);
        cost.stage(&x, &u, t)
    };
    let g = numeric_gradient(&f, &z, T::lit(FD_STEP));
    let hs = T::lit(FD_HESSIAN_STEP);
    let mut hess = SMatrix::<T, 9, 9>::zeros();
    for j in 0..9 {
        let (mut zp, mut zm) = (z, z);
        zp[j] += hs;
        zm[j] -= hs;
        let col = (numeric_gradient(&f, &zp, hs) - numeric_gradient(&f, &zm, hs)) / (hs + hs);
        hess.set_column(j, &col);
    }
    let hess = (hess + hess.transpose()) * T::lit(0.5);
    StageDerivatives {
        lx: g.fixed_rows::<STATE_DIM>(0).into_owned(),
        lu: g.fixed_rows::<CONTROL_DIM>(STATE_DIM).into_owned(),
        lxx: hess.fixed_view::<STATE_DIM, STATE_DIM>(0, 0).into_owned(),
        luu: hess.fixed_view::<CONTROL_DIM, CONTROL_DIM>(STATE_DIM, STATE_DIM).into_owned(),
        lux: hess.fixed_view::<CONTROL_DIM, STATE_DIM>(STATE_DIM, 0).into_owned(),
    }
}

pub fn numeric_terminal_derivatives<T: Real, C: CostModel<T> + ?Sized>(cost: &C, x: &StateVec<T>) -> TerminalDerivatives<T> {
    let grad = |x: &StateVec<T>, h: T| {
        let mut g = StateVec::zeros();
        for i in 0..STATE_DIM {
            let (mut xp, mut xm) = (*x, *x);
            xp[i] += h;
            xm[i] -= h;
            g[i] = (cost.terminal(&xp) - cost.terminal(&xm)) / (h + h);
        }
        g
    };
    let hs = T::lit(FD_HESSIAN_STEP);
    let mut lxx = StateMat::zeros();
    for j in 0..STATE_DIM {
        let (mut xp, mut xm) = (*x, *x);
        xp[j] += hs;
        xm[j] -= hs;
        lxx.set_column(j, &((grad(&xp, hs) - grad(&xm, hs)) / (hs + hs)));
    }
    TerminalDerivatives { lx: grad(x, T::lit(FD_STEP)), lxx: (lxx + lxx.transpose()) * T::lit(0.5) }
}

pub fn total_cost<T: Real, C: CostModel<T> + ?Sized>(cost: &C, states: &[StateVec<T>], controls: &[ControlVec<T>]) -> T {
    let stage = controls
        .iter()
        .zip(states)
        .enumerate()
        .fold(T::zero(), |acc, (t, (u, x))| acc + cost.stage(x, u, t));
    stage + cost.terminal(states.last().expect("non-empty state sequence"))
}

/// Quadratic tracking cost `(x - x_ref)' Q (x - x_ref) + u' R u` with a
/// quadratic terminal term. The heading error is wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost<T: Real> {
    pub state_ref: StateVec<T>,
    pub q: StateMat<T>,
    pub r: ControlMat<T>,
    pub goal: StateVec<T>,
    pub q_terminal: StateMat<T>,
}

impl<T: Real> CostModel<T> for QuadraticCost<T> {
    fn stage(&self, x: &StateVec<T>, u: &ControlVec<T>, _t: usize) -> T {
        let e = state_diff(x, &self.state_ref);
        (e.transpose() * self.q * e)[0] + (u.transpose() * self.r * u)[0]
    }

    fn terminal(&self, x: &StateVec<T>) -> T {
        let e = state_diff(x, &self.goal);
        (e.transpose() * self.q_terminal * e)[0]
    }

    fn stage_derivatives(&self, x: &StateVec<T>, u: &ControlVec<T>, _t: usize) -> StageDerivatives<T> {
        let e = state_diff(x, &self.state_ref);
        let q = self.q + self.q.transpose();
        let r = self.r + self.r.transpose();
        StageDerivatives { lx: q * e, lu: r * u, lxx: q, luu: r, lux: Gain::zeros() }
    }

    fn terminal_derivatives(&self, x: &StateVec<T>) -> TerminalDerivatives<T> {
        let e = state_diff(x, &self.goal);
        let q = self.q_terminal + self.q_terminal.transpose();
        TerminalDerivatives { lx: q * e, lxx: q }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Absolute cost change below which the solve counts as converged.
    pub cost_tol: f64,
    pub reg_init: f64,
    pub reg_max: f64,
    pub reg_scale: f64,
    /// Descending step sizes tried by the line search.
    pub line_search_alphas: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            cost_tol: 1e-6,
            reg_init: 1e-6,
            reg_max: 1e10,
            reg_scale: 10.0,
            line_search_alphas: (0..7).map(|i| 0.5f64.powi(i)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tol,
    MaxIters,
    RegMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T: Real> {
    pub iterations: usize,
    /// Initial cost followed by the cost after each accepted iteration.
    pub cost_trace: Vec<T>,
    pub converged: bool,
    pub gains: Vec<Gain<T>>,
    pub feedforward: Vec<ControlVec<T>>,
    pub termination_reason: Termination,
}

/// JSON summary of a [`SolveReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub iterations: usize,
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub termination_reason: Termination,
}

impl<T: Real> SolveReport<T> {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            iterations: self.iterations,
            cost_trace: self.cost_trace.iter().map(|c| c.as_f64()).collect(),
            converged: self.converged,
            termination_reason: self.termination_reason,
        }
    }

    pub fn final_cost(&self) -> T {
        *self.cost_trace.last().expect("cost trace starts with the initial cost")
    }
}

/// Output of one backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardPass<T: Real> {
    pub gains: Vec<Gain<T>>,
    pub feedforward: Vec<ControlVec<T>>,
    /// Coefficients `(d1, d2)` of the predicted change `alpha * d1 + alpha^2 * d2`.
    pub expected_decrease: (T, T),
    /// `Q_u` at every step.
    pub q_u: Vec<ControlVec<T>>,
    /// Gradient of the total cost with respect to each control, all other
    /// controls held fixed (fixed-control costate recursion).
    pub cost_gradient: Vec<ControlVec<T>>,
}

/// Simulates `controls` from `x0`, using `mode_schedule` as per-step overrides when given.
pub fn rollout<T: Real>(
    x0: &HybridState<T>,
    controls: &[Control<T>],
    dt: T,
    params: &SliderParams<T>,
    mode_schedule: Option<&[ContactMode]>,
) -> Result<Trajectory<T>, DdpError> {
    if controls.is_empty() {
        return Err(DdpError::EmptyControls);
    }
    if let Some(s) = mode_schedule {
        if s.len() != controls.len() {
            return Err(DdpError::ScheduleLength { expected: controls.len(), got: s.len() });
        }
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut modes = Vec::with_capacity(controls.len());
    states.push(*x0);
    for (t, u) in controls.iter().enumerate() {
        let over = mode_schedule.map(|s| s[t]);
        let (next, mode) = pushdyn::step(&states[t], u, dt, params, over)
            .map_err(|source| DdpError::Rollout { step: t, source })?;
        states.push(next);
        modes.push(mode);
    }
    Ok(Trajectory { states, controls: controls.to_vec(), modes, dt, total_cost: T::zero() })
}

/// Riccati-style backward recursion around `traj`.
///
/// Returns `None` when a regularized `Q_uu` is not positive definite or the
/// linearization fails.
pub fn backward_pass<T: Real>(
    traj: &Trajectory<T>,
    cost: &(impl CostModel<T> + ?Sized),
    reg: T,
    params: &SliderParams<T>,
) -> Option<BackwardPass<T>> {
    let n = traj.horizon();
    let xs = traj.state_vectors();
    let us = traj.control_vectors();
    let term = cost.terminal_derivatives(&xs[n]);
    let mut v_x = term.lx;
    let mut v_xx = term.lxx;
    let mut costate = term.lx;

    let mut gains = vec![Gain::zeros(); n];
    let mut feedforward = vec![ControlVec::zeros(); n];
    let mut q_us = vec![ControlVec::zeros(); n];
    let mut grads = vec![ControlVec::zeros(); n];
    let (mut d1, mut d2) = (T::zero(), T::zero());
    let half = T::lit(0.5);

    for t in (0..n).rev() {
        let (a, b) = pushdyn::linearize(&traj.states[t], &traj.controls[t], traj.dt, params, traj.modes[t]).ok()?;
        let l = cost.stage_derivatives(&xs[t], &us[t], t);

        let q_x = l.lx + a.transpose() * v_x;
        let q_u = l.lu + b.transpose() * v_x;
        let q_xx = l.lxx + a.transpose() * v_xx * a;
        let q_uu = l.luu + b.transpose() * v_xx * b;
        let q_ux = l.lux + b.transpose() * v_xx * a;

        grads[t] = l.lu + b.transpose() * costate;
        costate = l.lx + a.transpose() * costate;

        let q_uu_reg = (q_uu + q_uu.transpose()) * half + ControlMat::identity() * reg;
        let chol = Cholesky::new(q_uu_reg)?;
        let k = -chol.solve(&q_u);
        let gain = -chol.solve(&q_ux);

        d1 += k.dot(&q_u);
        d2 += half * k.dot(&(q_uu * k));

        v_x = q_x + gain.transpose() * q_uu * k + gain.transpose() * q_u + q_ux.transpose() * k;
        v_xx = q_xx + gain.transpose() * q_uu * gain + gain.transpose() * q_ux + q_ux.transpose() * gain;
        v_xx = (v_xx + v_xx.transpose()) * half;

        gains[t] = gain;
        feedforward[t] = k;
        q_us[t] = q_u;
    }
    Some(BackwardPass { gains, feedforward, expected_decrease: (d1, d2), q_u: q_us, cost_gradient: grads })
}

/// Closed-loop re-rollout `u = u_hat + alpha k + K (x - x_hat)` with the mode guard active.
#[allow(clippy::too_many_arguments)]
pub fn forward_pass<T: Real>(
    traj: &Trajectory<T>,
    gains: &[Gain<T>],
    feedforward: &[ControlVec<T>],
    alpha: T,
    cost: &(impl CostModel<T> + ?Sized),
    dt: T,
    params: &SliderParams<T>,
) -> Result<Trajectory<T>, DdpError> {
    let n = traj.horizon();
    let mut states = Vec::with_capacity(n + 1);
    let mut controls = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    states.push(traj.states[0]);
    for t in 0..n {
        let dx = state_diff(&states[t].to_vector(), &traj.states[t].to_vector());
        let u = traj.controls[t].to_vector() + feedforward[t] * alpha + gains[t] * dx;
        let u = Control::from_vector(&u);
        let (next, mode) =
            pushdyn::step(&states[t], &u, dt, params, None).map_err(|source| DdpError::Rollout { step: t, source })?;
        states.push(next);
        controls.push(u);
        modes.push(mode);
    }
    let mut cand = Trajectory { states, controls, modes, dt, total_cost: T::zero() };
    cand.evaluate(cost);
    Ok(cand)
}

fn backward_with_escalation<T: Real>(
    traj: &Trajectory<T>,
    cost: &(impl CostModel<T> + ?Sized),
    reg: &mut T,
    opts: &SolverOptions,
    params: &SliderParams<T>,
) -> Option<BackwardPass<T>> {
    let reg_max = T::lit(opts.reg_max);
    loop {
        if let Some(bp) = backward_pass(traj, cost, *reg, params) {
            return Some(bp);
        }
        *reg *= T::lit(opts.reg_scale);
        if *reg > reg_max {
            return None;
        }
    }
}

/// Runs DDP from the initial control guess `u_init`.
///
/// Solver failures never abort: the best trajectory found so far is returned
/// together with the reason the iteration stopped.
pub fn solve<T: Real>(
    x0: &HybridState<T>,
    u_init: &[Control<T>],
    cost: &(impl CostModel<T> + ?Sized),
    opts: &SolverOptions,
    dt: T,
    params: &SliderParams<T>,
) -> Result<(Trajectory<T>, SolveReport<T>), DdpError> {
    let mut traj = rollout(x0, u_init, dt, params, None)?;
    traj.evaluate(cost);
    let alphas: Vec<T> = opts.line_search_alphas.iter().map(|&a| T::lit(a)).collect();
    let reg_init = T::lit(opts.reg_init);
    let reg_max = T::lit(opts.reg_max);
    let scale = T::lit(opts.reg_scale);
    let tol = T::lit(opts.cost_tol);

    let mut reg = reg_init;
    let mut trace = vec![traj.total_cost];
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;
    let mut last_pass: Option<BackwardPass<T>> = None;

    while iterations < opts.max_iters {
        iterations += 1;
        let Some(bp) = backward_with_escalation(&traj, cost, &mut reg, opts, params) else {
            termination = Termination::RegMax;
            break;
        };
        let accepted = alphas.iter().find_map(|&alpha| {
            forward_pass(&traj, &bp.gains, &bp.feedforward, alpha, cost, dt, params)
                .ok()
                .filter(|cand| cand.total_cost < traj.total_cost)
        });
        match accepted {
            Some(cand) => {
                let dj = traj.total_cost - cand.total_cost;
                traj = cand;
                trace.push(traj.total_cost);
                last_pass = None;
                reg = (reg / scale).max(reg_init);
                if dj < tol {
                    termination = Termination::Tol;
                    break;
                }
            }
            None => {
                let (d1, d2) = bp.expected_decrease;
                if -(d1 + d2) < tol {
                    last_pass = Some(bp);
                    termination = Termination::Tol;
                    break;
                }
                reg *= scale;
                if reg > reg_max {
                    last_pass = Some(bp);
                    termination = Termination::RegMax;
                    break;
                }
            }
        }
    }

    // Feedback terms around the returned trajectory.
    let bp = match last_pass {
        Some(bp) => Some(bp),
        None => {
            let mut r = reg;
            backward_with_escalation(&traj, cost, &mut r, opts, params)
        }
    };
    let n = traj.horizon();
    let (gains, feedforward) = match bp {
        Some(bp) => (bp.gains, bp.feedforward),
        None => (vec![Gain::zeros(); n], vec![ControlVec::zeros(); n]),
    };
    let report = SolveReport {
        iterations,
        cost_trace: trace,
        converged: termination == Termination::Tol,
        gains,
        feedforward,
        termination_reason: termination,
    };
    Ok((traj, report))
}

/// Applies stored feedback around a nominal trajectory from a (possibly perturbed) start.
pub fn closed_loop_rollout<T: Real>(
    nominal: &Trajectory<T>,
    report: &SolveReport<T>,
    x0: &HybridState<T>,
    params: &SliderParams<T>,
) -> Result<Trajectory<T>, DdpError> {
    let mut states = vec![*x0];
    let mut controls = Vec::with_capacity(nominal.horizon());
    let mut modes = Vec::with_capacity(nominal.horizon());
    for t in 0..nominal.horizon() {
        let dx = state_diff(&states[t].to_vector(), &nominal.states[t].to_vector());
        let u = nominal.controls[t].to_vector() + report.gains[t] * dx;
        let u = Control::from_vector(&u);
        let (next, mode) = pushdyn::step(&states[t], &u, nominal.dt, params, None)
            .map_err(|source| DdpError::Rollout { step: t, source })?;
        states.push(next);
        controls.push(u);
        modes.push(mode);
    }
    Ok(Trajectory { states, controls, modes, dt: nominal.dt, total_cost: T::zero() })
}
