//! Reaching, regularization, bound, switch, velocity and acceleration cost terms.
//!
//! [`DsCost`] is the reaching cost with control regularization and a soft
//! control bound. [`DpCost`] adds demonstration tracking on top of it.

use nalgebra::{DMatrix, Matrix2, SMatrix, SymmetricEigen, Vector2, Vector3};
use thiserror::Error;

use crate::ddp::{CostModel, Gain, StageDerivatives, TerminalDerivatives};
use crate::pushdyn::{state_diff, ControlVec, StateVec, STATE_DIM};
use crate::scalar::Real;

type StateMat<T> = SMatrix<T, STATE_DIM, STATE_DIM>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("weight `{0}` must be symmetric positive semidefinite")]
    NotPsd(&'static str),
    #[error("control regularizer R must be positive definite")]
    NotPd,
    #[error("control bound u_l must be positive")]
    BadBound,
    #[error("switch timesteps must be strictly increasing within [0, {0})")]
    BadSwitchTimes(usize),
    #[error("reference length {got} does not match horizon {expected}")]
    RefLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T: Real> {
    /// Terminal reaching weight.
    pub q_terminal: StateMat<T>,
    /// Control regularizer.
    pub r: Matrix2<T>,
    /// Weight of the soft control-bound penalty.
    pub q_bound: Matrix2<T>,
    /// Control bound per axis (m/s^2).
    pub u_limit: T,
    /// Weight on the state at demonstrated face-switch instants.
    pub q_switch: StateMat<T>,
    /// Pusher-velocity tracking weight.
    pub r_vel: Matrix2<T>,
    /// Pusher-acceleration tracking weight.
    pub r_acc: Matrix2<T>,
}

impl<T: Real> Default for Weights<T> {
    fn default() -> Self {
        let diag7 = |d: [f64; 7]| StateMat::from_diagonal(&StateVec::from_iterator(d.iter().map(|&v| T::lit(v))));
        let eye = |s: f64| Matrix2::identity() * T::lit(s);
        Self {
            q_terminal: diag7([200.0, 200.0, 100.0, 0.0, 0.0, 0.0, 0.0]),
            r: eye(1e-2),
            q_bound: eye(1e2),
            u_limit: T::lit(1.0),
            q_switch: diag7([0.0, 0.0, 0.0, 50.0, 50.0, 0.0, 0.0]),
            r_vel: eye(1e-1),
            r_acc: eye(1e-2),
        }
    }
}

fn is_psd<T: Real, const N: usize>(m: &SMatrix<T, N, N>, strict: bool) -> bool {
    let tol = T::lit(1e-12) * (T::one() + m.amax());
    if (m - m.transpose()).amax() > tol {
        return false;
    }
    let eig = SymmetricEigen::new(DMatrix::from_column_slice(N, N, m.as_slice()));
    eig.eigenvalues.iter().all(|&l| if strict { l > T::zero() } else { l >= -tol })
}

impl<T: Real> Weights<T> {
    pub fn validate(&self) -> Result<(), CostError> {
        if self.u_limit.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(CostError::BadBound);
        }
        if !is_psd(&self.r, true) {
            return Err(CostError::NotPd);
        }
        let checks: [(bool, &'static str); 5] = [
            (is_psd(&self.q_terminal, false), "Q_T"),
            (is_psd(&self.q_bound, false), "Q_f"),
            (is_psd(&self.q_switch, false), "Q_n"),
            (is_psd(&self.r_vel, false), "R_dv"),
            (is_psd(&self.r_acc, false), "R_du"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Err(CostError::NotPsd(name)),
            None => Ok(()),
        }
    }
}

/// Demonstration-derived references for the tracking terms.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceRefs<T: Real> {
    /// Full-state target with a zero pusher block.
    pub target: StateVec<T>,
    /// `(timestep, demonstrated state)` at each face switch.
    pub switch_states: Vec<(usize, StateVec<T>)>,
    pub vel_refs: Vec<Vector2<T>>,
    pub acc_refs: Vec<Vector2<T>>,
}

impl<T: Real> GuidanceRefs<T> {
    pub fn horizon(&self) -> usize {
        self.vel_refs.len()
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let n = self.vel_refs.len();
        if self.acc_refs.len() != n {
            return Err(CostError::RefLength { expected: n, got: self.acc_refs.len() });
        }
        let mut prev: Option<usize> = None;
        for &(t, _) in &self.switch_states {
            if t >= n || prev.is_some_and(|p| t <= p) {
                return Err(CostError::BadSwitchTimes(n));
            }
            prev = Some(t);
        }
        Ok(())
    }
}

/// Target state `(x, y, theta, 0, 0, 0, 0)` for a slider pose.
pub fn target_state<T: Real>(pose: &Vector3<T>) -> StateVec<T> {
    let mut x = StateVec::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(pose);
    x
}

/// Dead-zone soft threshold: the amount by which each component exceeds `[-u_l, u_l]`.
pub fn f_cut<T: Real>(u: &Vector2<T>, u_limit: T) -> Vector2<T> {
    u.map(|v| {
        if v > u_limit {
            v - u_limit
        } else if v < -u_limit {
            v + u_limit
        } else {
            T::zero()
        }
    })
}

/// Diagonal Jacobian of [`f_cut`]; zero at the kinks.
fn f_cut_jacobian<T: Real>(u: &Vector2<T>, u_limit: T) -> Matrix2<T> {
    let d = |v: T| if v.abs() > u_limit { T::one() } else { T::zero() };
    Matrix2::from_diagonal(&Vector2::new(d(u[0]), d(u[1])))
}

fn quad<T: Real, const N: usize>(e: &SMatrix<T, N, 1>, w: &SMatrix<T, N, N>) -> T {
    (e.transpose() * w * e)[0]
}

fn sym2<T: Real, const N: usize>(w: &SMatrix<T, N, N>) -> SMatrix<T, N, N> {
    w + w.transpose()
}

/// Individual cost terms summed over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown<T> {
    pub reaching: T,
    pub regularizer: T,
    pub bound: T,
    pub switch: T,
    pub velocity: T,
    pub acceleration: T,
}

impl<T: Real> CostBreakdown<T> {
    pub fn total(&self) -> T {
        self.reaching + self.regularizer + self.bound + self.switch + self.velocity + self.acceleration
    }
}

/// Reaching cost plus control regularizer plus soft control bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DsCost<T: Real> {
    pub target: StateVec<T>,
    pub weights: Weights<T>,
}

impl<T: Real> DsCost<T> {
    pub fn new(target: StateVec<T>, weights: Weights<T>) -> Self {
        Self { target, weights }
    }

    fn regularizer(&self, u: &ControlVec<T>) -> T {
        quad(u, &self.weights.r)
    }

    fn bound(&self, u: &ControlVec<T>) -> T {
        quad(&f_cut(u, self.weights.u_limit), &self.weights.q_bound)
    }

    /// Control-only part of the stage derivatives.
    fn control_derivatives(&self, u: &ControlVec<T>) -> (ControlVec<T>, Matrix2<T>) {
        let w = &self.weights;
        let d = f_cut_jacobian(u, w.u_limit);
        let fc = f_cut(u, w.u_limit);
        let qf = sym2(&w.q_bound);
        let r = sym2(&w.r);
        (r * u + d.transpose() * qf * fc, r + d.transpose() * qf * d)
    }

    pub fn breakdown(&self, states: &[StateVec<T>], controls: &[ControlVec<T>]) -> CostBreakdown<T> {
        let last = states.last().expect("non-empty state sequence");
        CostBreakdown {
            reaching: self.terminal(last),
            regularizer: controls.iter().fold(T::zero(), |a, u| a + self.regularizer(u)),
            bound: controls.iter().fold(T::zero(), |a, u| a + self.bound(u)),
            ..Default::default()
        }
    }
}

impl<T: Real> CostModel<T> for DsCost<T> {
    fn stage(&self, _x: &StateVec<T>, u: &ControlVec<T>, _t: usize) -> T {
        self.regularizer(u) + self.bound(u)
    }

    fn terminal(&self, x: &StateVec<T>) -> T {
        quad(&state_diff(&self.target, x), &self.weights.q_terminal)
    }

    fn stage_derivatives(&self, _x: &StateVec<T>, u: &ControlVec<T>, _t: usize) -> StageDerivatives<T> {
        let (lu, luu) = self.control_derivatives(u);
        StageDerivatives { lx: StateVec::zeros(), lu, lxx: StateMat::zeros(), luu, lux: Gain::zeros() }
    }

    fn terminal_derivatives(&self, x: &StateVec<T>) -> TerminalDerivatives<T> {
        let q = sym2(&self.weights.q_terminal);
        TerminalDerivatives { lx: -(q * state_diff(&self.target, x)), lxx: q }
    }
}

/// [`DsCost`] plus switch-state, velocity and acceleration tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct DpCost<T: Real> {
    pub base: DsCost<T>,
    pub refs: GuidanceRefs<T>,
    /// Switch state indexed by timestep.
    switch_at: Vec<Option<StateVec<T>>>,
}

impl<T: Real> DpCost<T> {
    pub fn new(refs: GuidanceRefs<T>, weights: Weights<T>) -> Result<Self, CostError> {
        refs.validate()?;
        let mut switch_at = vec![None; refs.horizon()];
        for &(t, mu) in &refs.switch_states {
            switch_at[t] = Some(mu);
        }
        Ok(Self { base: DsCost::new(refs.target, weights), refs, switch_at })
    }

    fn weights(&self) -> &Weights<T> {
        &self.base.weights
    }

    fn switch_term(&self, x: &StateVec<T>, t: usize) -> T {
        match self.switch_at.get(t).copied().flatten() {
            Some(mu) => quad(&state_diff(&mu, x), &self.weights().q_switch),
            None => T::zero(),
        }
    }

    fn velocity_term(&self, x: &StateVec<T>, t: usize) -> T {
        match self.refs.vel_refs.get(t) {
            Some(v_ref) => quad(&(v_ref - x.fixed_rows::<2>(5)), &self.weights().r_vel),
            None => T::zero(),
        }
    }

    fn acceleration_term(&self, u: &ControlVec<T>, t: usize) -> T {
        match self.refs.acc_refs.get(t) {
            Some(u_ref) => quad(&(u_ref - u), &self.weights().r_acc),
            None => T::zero(),
        }
    }

    pub fn breakdown(&self, states: &[StateVec<T>], controls: &[ControlVec<T>]) -> CostBreakdown<T> {
        let mut b = self.base.breakdown(states, controls);
        for (t, (x, u)) in states.iter().zip(controls).enumerate() {
            b.switch += self.switch_term(x, t);
            b.velocity += self.velocity_term(x, t);
            b.acceleration += self.acceleration_term(u, t);
        }
        b
    }
}

impl<T: Real> CostModel<T> for DpCost<T> {
    fn stage(&self, x: &StateVec<T>, u: &ControlVec<T>, t: usize) -> T {
        self.base.stage(x, u, t) + self.switch_term(x, t) + self.velocity_term(x, t) + self.acceleration_term(u, t)
    }

    fn terminal(&self, x: &StateVec<T>) -> T {
        self.base.terminal(x)
    }

    fn stage_derivatives(&self, x: &StateVec<T>, u: &ControlVec<T>, t: usize) -> StageDerivatives<T> {
        let mut d = self.base.stage_derivatives(x, u, t);
        let w = self.weights();
        if let Some(mu) = self.switch_at.get(t).copied().flatten() {
            let q = sym2(&w.q_switch);
            d.lx -= q * state_diff(&mu, x);
            d.lxx += q;
        }
        if let Some(v_ref) = self.refs.vel_refs.get(t) {
            let r = sym2(&w.r_vel);
            let g = -(r * (v_ref - x.fixed_rows::<2>(5)));
            let mut lx = d.lx.fixed_rows_mut::<2>(5);
            lx += g;
            let mut block = d.lxx.fixed_view_mut::<2, 2>(5, 5);
            block += r;
        }
        if let Some(u_ref) = self.refs.acc_refs.get(t) {
            let r = sym2(&w.r_acc);
            d.lu -= r * (u_ref - u);
            d.luu += r;
        }
        d
    }

    fn terminal_derivatives(&self, x: &StateVec<T>) -> TerminalDerivatives<T> {
        self.base.terminal_derivatives(x)
    }
}
