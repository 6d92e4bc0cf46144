//! Quasi-static pusher-slider dynamics.
//!
//! A square slider rests on a plane and is pushed by a point pusher. Friction
//! with the support surface is modelled by an ellipsoidal limit surface, so the
//! slider's body twist is `A * w` where `w` is the body wrench applied by the
//! pusher and `A = diag(1/f_max^2, 1/f_max^2, 1/m_max^2)`.
//!
//! The state is `[x_s, y_s, theta_s, p_x, p_y, v_x, v_y]`: slider pose in the
//! world, pusher position in the slider frame, pusher velocity in the world.
//! The control is the world-frame pusher acceleration.
//!
//! Thirteen contact modes exist: sticking, sliding up and sliding down on each
//! of the four faces, plus separation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::{wrap_angle, Real};

pub const STATE_DIM: usize = 7;
pub const CONTROL_DIM: usize = 2;

pub type StateVec<T> = SVector<T, STATE_DIM>;
pub type ControlVec<T> = SVector<T, CONTROL_DIM>;
pub type StateJacobian<T> = SMatrix<T, STATE_DIM, STATE_DIM>;
pub type ControlJacobian<T> = SMatrix<T, STATE_DIM, CONTROL_DIM>;

/// Index of the slider heading inside [`StateVec`].
pub const THETA: usize = 2;

const SLACK: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-12;
const GAP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("pusher is pulling on the slider (f_n = {0})")]
    NoPush(f64),
    #[error("contact compliance matrix is singular")]
    Degenerate,
    #[error("non-finite state after integration")]
    NonFinite,
    #[error("invalid slider parameters: {0}")]
    InvalidParams(String),
    #[error("time step {0} outside (0, 0.2]")]
    InvalidTimestep(f64),
}

/// Physical parameters of the slider and both frictional contacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliderParams<T> {
    /// Half of the square's side length (m).
    pub half_side: T,
    /// Friction coefficient between slider and table.
    pub mu_ground: T,
    /// Friction coefficient between pusher and slider.
    pub mu_contact: T,
    pub mass: T,
    pub gravity: T,
    /// Characteristic length relating maximum friction torque to force (m).
    pub char_len: T,
    /// Gap below which the pusher counts as touching a face (m).
    pub contact_tol: T,
}

impl<T: Real> Default for SliderParams<T> {
    fn default() -> Self {
        let half_side = T::lit(0.05);
        Self {
            half_side,
            mu_ground: T::lit(0.35),
            mu_contact: T::lit(0.3),
            mass: T::lit(0.5),
            gravity: T::lit(9.81),
            char_len: T::lit(0.6) * half_side,
            contact_tol: T::lit(1e-3),
        }
    }
}

impl<T: Real> SliderParams<T> {
    /// Maximum friction force the table can exert (N).
    pub fn f_max(&self) -> T {
        self.mu_ground * self.mass * self.gravity
    }

    /// Maximum friction torque the table can exert (N m).
    pub fn m_max(&self) -> T {
        self.char_len * self.f_max()
    }

    /// Diagonal of the limit-surface matrix `A`.
    pub fn limit_surface(&self) -> Vector3<T> {
        let f = self.f_max();
        let m = self.m_max();
        Vector3::new(T::one() / (f * f), T::one() / (f * f), T::one() / (m * m))
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let z = T::zero();
        let checks = [
            (self.half_side > z, "half_side must be > 0"),
            (self.mu_ground > z, "mu_ground must be > 0"),
            (self.mu_contact >= z, "mu_contact must be >= 0"),
            (self.mass > z, "mass must be > 0"),
            (self.gravity > z, "gravity must be > 0"),
            (self.char_len > z, "char_len must be > 0"),
            (self.contact_tol > z, "contact_tol must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(DynamicsError::InvalidParams((*msg).to_owned())),
            None => Ok(()),
        }
    }
}

/// Full hybrid state of the pusher-slider system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridState<T> {
    /// `(x, y, theta)` of the slider in the world frame.
    pub slider_pose: Vector3<T>,
    /// Pusher position in the slider frame.
    pub pusher_pos: Vector2<T>,
    /// Pusher velocity in the world frame.
    pub pusher_vel: Vector2<T>,
}

impl<T: Real> HybridState<T> {
    pub fn new(slider_pose: Vector3<T>, pusher_pos: Vector2<T>, pusher_vel: Vector2<T>) -> Self {
        Self { slider_pose, pusher_pos, pusher_vel }
    }

    pub fn to_vector(&self) -> StateVec<T> {
        let (s, p, v) = (&self.slider_pose, &self.pusher_pos, &self.pusher_vel);
        StateVec::from_column_slice(&[s[0], s[1], s[2], p[0], p[1], v[0], v[1]])
    }

    pub fn from_vector(x: &StateVec<T>) -> Self {
        Self {
            slider_pose: Vector3::new(x[0], x[1], x[2]),
            pusher_pos: Vector2::new(x[3], x[4]),
            pusher_vel: Vector2::new(x[5], x[6]),
        }
    }

    pub fn theta(&self) -> T {
        self.slider_pose[2]
    }

    /// Pusher velocity expressed in the slider frame.
    pub fn pusher_vel_body(&self) -> Vector2<T> {
        rotation(self.theta()).transpose() * self.pusher_vel
    }

    /// Pusher position in the world frame.
    pub fn pusher_world(&self) -> Vector2<T> {
        self.slider_pose.xy() + rotation(self.theta()) * self.pusher_pos
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Pusher acceleration command (world frame, m/s^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control<T> {
    pub accel: Vector2<T>,
}

impl<T: Real> Control<T> {
    pub fn new(ax: T, ay: T) -> Self {
        Self { accel: Vector2::new(ax, ay) }
    }

    pub fn zero() -> Self {
        Self { accel: Vector2::zeros() }
    }

    pub fn to_vector(&self) -> ControlVec<T> {
        self.accel
    }

    pub fn from_vector(u: &ControlVec<T>) -> Self {
        Self { accel: *u }
    }
}

/// Slider face, indexed by outward normal `+x, +y, -x, -y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    PosX = 0,
    PosY = 1,
    NegX = 2,
    NegY = 3,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::PosX, Face::PosY, Face::NegX, Face::NegY];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Face> {
        Self::ALL.get(i).copied()
    }

    pub fn normal<T: Real>(self) -> Vector2<T> {
        let (o, z) = (T::one(), T::zero());
        match self {
            Face::PosX => Vector2::new(o, z),
            Face::PosY => Vector2::new(z, o),
            Face::NegX => Vector2::new(-o, z),
            Face::NegY => Vector2::new(z, -o),
        }
    }

    /// Normal rotated by +90 degrees.
    pub fn tangent<T: Real>(self) -> Vector2<T> {
        let n = self.normal::<T>();
        Vector2::new(-n[1], n[0])
    }

    pub fn token(self) -> &'static str {
        match self {
            Face::PosX => "+x",
            Face::PosY => "+y",
            Face::NegX => "-x",
            Face::NegY => "-y",
        }
    }
}

/// The 13 interaction modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactMode {
    Sticking(Face),
    SlidingUp(Face),
    SlidingDown(Face),
    Separation,
}

/// How the contact force is constrained inside a contact mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    Stick,
    SlideUp,
    SlideDown,
}

impl ContactKind {
    fn sign<T: Real>(self) -> T {
        match self {
            ContactKind::Stick => T::zero(),
            ContactKind::SlideUp => T::one(),
            ContactKind::SlideDown => -T::one(),
        }
    }
}

impl ContactMode {
    pub fn all() -> Vec<ContactMode> {
        let mut modes = Vec::with_capacity(13);
        for face in Face::ALL {
            modes.push(ContactMode::Sticking(face));
            modes.push(ContactMode::SlidingUp(face));
            modes.push(ContactMode::SlidingDown(face));
        }
        modes.push(ContactMode::Separation);
        modes
    }

    pub fn face(self) -> Option<Face> {
        match self {
            ContactMode::Sticking(f) | ContactMode::SlidingUp(f) | ContactMode::SlidingDown(f) => {
                Some(f)
            }
            ContactMode::Separation => None,
        }
    }

    pub fn kind(self) -> Option<ContactKind> {
        match self {
            ContactMode::Sticking(_) => Some(ContactKind::Stick),
            ContactMode::SlidingUp(_) => Some(ContactKind::SlideUp),
            ContactMode::SlidingDown(_) => Some(ContactKind::SlideDown),
            ContactMode::Separation => None,
        }
    }

    fn with(kind: ContactKind, face: Face) -> ContactMode {
        match kind {
            ContactKind::Stick => ContactMode::Sticking(face),
            ContactKind::SlideUp => ContactMode::SlidingUp(face),
            ContactKind::SlideDown => ContactMode::SlidingDown(face),
        }
    }

    pub fn is_contact(self) -> bool {
        self != ContactMode::Separation
    }
}

impl fmt::Display for ContactMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContactMode::Sticking(face) => write!(f, "ST{}", face.token()),
            ContactMode::SlidingUp(face) => write!(f, "SU{}", face.token()),
            ContactMode::SlidingDown(face) => write!(f, "SD{}", face.token()),
            ContactMode::Separation => f.write_str("SE"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid contact mode token `{0}`")]
pub struct ModeParseError(pub String);

impl FromStr for ContactMode {
    type Err = ModeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "SE" {
            return Ok(ContactMode::Separation);
        }
        let err = || ModeParseError(s.to_owned());
        if s.len() != 4 || !s.is_ascii() {
            return Err(err());
        }
        let face = Face::ALL
            .into_iter()
            .find(|f| f.token() == &s[2..])
            .ok_or_else(err)?;
        match &s[..2] {
            "ST" => Ok(ContactMode::Sticking(face)),
            "SU" => Ok(ContactMode::SlidingUp(face)),
            "SD" => Ok(ContactMode::SlidingDown(face)),
            _ => Err(err()),
        }
    }
}

impl Serialize for ContactMode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContactMode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Geometry of the pusher relative to one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceContact<T> {
    pub face: Face,
    /// Pusher projected onto the face, tangential coordinate clamped to the face.
    pub contact_point: Vector2<T>,
    pub normal: Vector2<T>,
    pub tangent: Vector2<T>,
    /// Signed distance from the face plane, positive outside.
    pub gap: T,
}

/// Result of the quasi-static contact solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSolution<T> {
    /// Slider twist `(vb_x, vb_y, omega)` in the body frame.
    pub body_twist: Vector3<T>,
    /// Normal force pushing into the slider.
    pub f_n: T,
    /// Tangential force along the face tangent.
    pub f_t: T,
    /// Tangential pusher velocity relative to the contact point. Zero when sticking.
    pub slip: T,
}

impl<T: Real> ContactSolution<T> {
    fn zero() -> Self {
        Self { body_twist: Vector3::zeros(), f_n: T::zero(), f_t: T::zero(), slip: T::zero() }
    }

    /// Force applied to the slider, in the body frame.
    pub fn force(&self, normal: &Vector2<T>, tangent: &Vector2<T>) -> Vector2<T> {
        -normal * self.f_n + tangent * self.f_t
    }
}

pub fn rotation<T: Real>(theta: T) -> Matrix2<T> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Geometry of `pusher_pos` against a given face.
pub fn face_contact<T: Real>(face: Face, pusher_pos: &Vector2<T>, params: &SliderParams<T>) -> FaceContact<T> {
    let h = params.half_side;
    let normal = face.normal::<T>();
    let tangent = face.tangent::<T>();
    let gap = pusher_pos.dot(&normal) - h;
    let along = pusher_pos.dot(&tangent).clamp(-h, h);
    FaceContact { face, contact_point: normal * h + tangent * along, normal, tangent, gap }
}

/// Face nearest to the pusher (largest signed gap, lowest index on ties).
///
/// Always `Some` for finite input: the face with the largest gap also has the
/// smallest tangential overshoot, so a pusher beyond a face end is reported
/// against the adjacent face with a gap above `contact_tol`.
pub fn active_face<T: Real>(pusher_pos: &Vector2<T>, params: &SliderParams<T>) -> Option<FaceContact<T>> {
    if !(pusher_pos[0].is_finite() && pusher_pos[1].is_finite()) {
        return None;
    }
    let mut best = face_contact(Face::PosX, pusher_pos, params);
    for face in &Face::ALL[1..] {
        let fc = face_contact(*face, pusher_pos, params);
        if fc.gap > best.gap {
            best = fc;
        }
    }
    Some(best)
}

/// Contact-point velocity map `C = J A J^T` for contact point `r`.
fn compliance<T: Real>(r: &Vector2<T>, params: &SliderParams<T>) -> Matrix2<T> {
    let ls = params.limit_surface();
    let (a, b) = (ls[0], ls[2]);
    Matrix2::new(
        a + b * r[1] * r[1],
        -b * r[0] * r[1],
        -b * r[0] * r[1],
        a + b * r[0] * r[0],
    )
}

/// Body twist produced by force `f` applied at `r`.
fn twist_from_force<T: Real>(r: &Vector2<T>, f: &Vector2<T>, params: &SliderParams<T>) -> Vector3<T> {
    let ls = params.limit_surface();
    let torque = r[0] * f[1] - r[1] * f[0];
    Vector3::new(ls[0] * f[0], ls[1] * f[1], ls[2] * torque)
}

/// Velocity of the slider material point at `r` under `twist`.
fn point_velocity<T: Real>(r: &Vector2<T>, twist: &Vector3<T>) -> Vector2<T> {
    Vector2::new(twist[0] - twist[2] * r[1], twist[1] + twist[2] * r[0])
}

/// Contact solve without the sign check on the normal force.
///
/// Used when the mode is frozen: the linear map from pusher velocity to twist
/// stays defined on both sides of `f_n = 0`.
fn contact_solve_unchecked<T: Real>(
    contact_point: &Vector2<T>,
    normal: &Vector2<T>,
    tangent: &Vector2<T>,
    vel_body: &Vector2<T>,
    kind: ContactKind,
    params: &SliderParams<T>,
) -> Result<ContactSolution<T>, DynamicsError> {
    let c = compliance(contact_point, params);
    match kind {
        ContactKind::Stick => {
            let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
            if det.abs() <= T::lit(SINGULAR_TOL) {
                return Err(DynamicsError::Degenerate);
            }
            let inv = Matrix2::new(c[(1, 1)], -c[(0, 1)], -c[(1, 0)], c[(0, 0)]) / det;
            let f = inv * vel_body;
            Ok(ContactSolution {
                body_twist: twist_from_force(contact_point, &f, params),
                f_n: -f.dot(normal),
                f_t: f.dot(tangent),
                slip: T::zero(),
            })
        }
        ContactKind::SlideUp | ContactKind::SlideDown => {
            let s = kind.sign::<T>();
            let mu = params.mu_contact;
            let dir = -normal + tangent * (s * mu);
            let cd = c * dir;
            let denom = normal.dot(&cd);
            if denom.abs() <= T::lit(SINGULAR_TOL) {
                return Err(DynamicsError::Degenerate);
            }
            let f_n = normal.dot(vel_body) / denom;
            let f = dir * f_n;
            let twist = twist_from_force(contact_point, &f, params);
            let v_cp = point_velocity(contact_point, &twist);
            Ok(ContactSolution {
                body_twist: twist,
                f_n,
                f_t: s * mu * f_n,
                slip: tangent.dot(vel_body) - tangent.dot(&v_cp),
            })
        }
    }
}

/// Quasi-static contact solve for one contact mode.
///
/// Sticking matches the full contact-point velocity to the pusher velocity;
/// sliding puts the force on a friction-cone edge and matches only the normal
/// component.
pub fn contact_solve<T: Real>(
    contact_point: &Vector2<T>,
    normal: &Vector2<T>,
    tangent: &Vector2<T>,
    vel_body: &Vector2<T>,
    kind: ContactKind,
    params: &SliderParams<T>,
) -> Result<ContactSolution<T>, DynamicsError> {
    let sol = contact_solve_unchecked(contact_point, normal, tangent, vel_body, kind, params)?;
    if sol.f_n < T::zero() {
        return Err(DynamicsError::NoPush(sol.f_n.as_f64()));
    }
    Ok(sol)
}

/// Mode guard returning the selected mode together with its contact solution.
///
/// The solution is `None` for separation.
pub fn classify<T: Real>(
    state: &HybridState<T>,
    params: &SliderParams<T>,
) -> (ContactMode, Option<ContactSolution<T>>) {
    let Some(fc) = active_face(&state.pusher_pos, params) else {
        return (ContactMode::Separation, None);
    };
    if fc.gap > params.contact_tol + T::lit(GAP_EPS) {
        return (ContactMode::Separation, None);
    }
    let v = state.pusher_vel_body();
    let solve = |kind| contact_solve_unchecked(&fc.contact_point, &fc.normal, &fc.tangent, &v, kind, params);
    let stick = match solve(ContactKind::Stick) {
        Ok(s) => s,
        Err(_) => return (ContactMode::Separation, None),
    };
    if stick.f_n < T::zero() {
        return (ContactMode::Separation, None);
    }
    let mu = params.mu_contact;
    let bound = mu * stick.f_n;
    if stick.f_t.abs() <= bound + T::lit(SLACK) * (T::one() + bound) {
        return (ContactMode::Sticking(fc.face), Some(stick));
    }
    let kind = if stick.f_t > T::zero() { ContactKind::SlideUp } else { ContactKind::SlideDown };
    if let Ok(slide) = solve(kind) {
        let sign = kind.sign::<T>();
        if slide.f_n >= T::zero() && slide.slip * sign >= T::zero() {
            return (ContactMode::with(kind, fc.face), Some(slide));
        }
    }
    // Inconsistent slip: stick with the friction force clamped onto the cone.
    let f_t = stick.f_t.clamp(-bound, bound);
    let f = -fc.normal * stick.f_n + fc.tangent * f_t;
    let clamped = ContactSolution {
        body_twist: twist_from_force(&fc.contact_point, &f, params),
        f_n: stick.f_n,
        f_t,
        slip: T::zero(),
    };
    (ContactMode::Sticking(fc.face), Some(clamped))
}

/// Deterministic contact-mode guard.
pub fn select_mode<T: Real>(state: &HybridState<T>, params: &SliderParams<T>) -> ContactMode {
    classify(state, params).0
}

/// One semi-implicit Euler step.
///
/// The pusher velocity is updated first and the mode (guard or override) is
/// evaluated with the updated velocity. With an override, the contact solve
/// runs on the override's face and does not reject pulling forces.
pub fn step<T: Real>(
    state: &HybridState<T>,
    control: &Control<T>,
    dt: T,
    params: &SliderParams<T>,
    mode_override: Option<ContactMode>,
) -> Result<(HybridState<T>, ContactMode), DynamicsError> {
    if !(dt > T::zero() && dt <= T::lit(0.2)) {
        return Err(DynamicsError::InvalidTimestep(dt.as_f64()));
    }
    let mut mid = *state;
    mid.pusher_vel += control.accel * dt;

    let (mode, solution) = match mode_override {
        None => classify(&mid, params),
        Some(ContactMode::Separation) => (ContactMode::Separation, None),
        Some(mode) => {
            let face = mode.face().expect("contact mode has a face");
            let kind = mode.kind().expect("contact mode has a kind");
            let fc = face_contact(face, &mid.pusher_pos, params);
            let v = mid.pusher_vel_body();
            let sol = contact_solve_unchecked(&fc.contact_point, &fc.normal, &fc.tangent, &v, kind, params)?;
            (mode, Some(sol))
        }
    };
    let twist = solution.unwrap_or_else(ContactSolution::zero).body_twist;

    let theta = state.theta();
    let vb = twist.xy();
    let omega = twist[2];
    let p = state.pusher_pos;
    let perp = Vector2::new(-p[1], p[0]);
    let p_rate = rotation(theta).transpose() * mid.pusher_vel - (vb + perp * omega);

    let mut next = mid;
    if twist != Vector3::zeros() {
        let theta_next = theta + omega * dt;
        let dp = rotation(theta_next) * vb * dt;
        next.slider_pose = Vector3::new(state.slider_pose[0] + dp[0], state.slider_pose[1] + dp[1], theta_next);
    }
    next.pusher_pos = p + p_rate * dt;
    project_out(&mut next.pusher_pos, params);
    next.slider_pose[2] = wrap_angle(next.slider_pose[2]);

    if !next.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    Ok((next, mode))
}

/// Moves a pusher that ended up inside the slider back onto the nearest face.
fn project_out<T: Real>(p: &mut Vector2<T>, params: &SliderParams<T>) {
    if let Some(fc) = active_face(p, params) {
        if fc.gap < T::zero() {
            *p -= fc.normal * fc.gap;
        }
    }
}

/// State difference with the heading component wrapped.
pub fn state_diff<T: Real>(a: &StateVec<T>, b: &StateVec<T>) -> StateVec<T> {
    let mut d = a - b;
    d[THETA] = wrap_angle(d[THETA]);
    d
}

/// Central finite-difference Jacobians of [`step`] with the mode frozen.
pub fn linearize<T: Real>(
    state: &HybridState<T>,
    control: &Control<T>,
    dt: T,
    params: &SliderParams<T>,
    frozen_mode: ContactMode,
) -> Result<(StateJacobian<T>, ControlJacobian<T>), DynamicsError> {
    let x = state.to_vector();
    let u = control.to_vector();
    let eval = |x: &StateVec<T>, u: &ControlVec<T>| -> Result<StateVec<T>, DynamicsError> {
        let (next, _) = step(&HybridState::from_vector(x), &Control::from_vector(u), dt, params, Some(frozen_mode))?;
        Ok(next.to_vector())
    };
    let base = T::lit(1e-6);
    let step_size = |v: T| base.max(base * v.abs());

    let mut a = StateJacobian::zeros();
    for i in 0..STATE_DIM {
        let h = step_size(x[i]);
        let (mut xp, mut xm) = (x, x);
        xp[i] += h;
        xm[i] -= h;
        let col = state_diff(&eval(&xp, &u)?, &eval(&xm, &u)?) / (h + h);
        a.set_column(i, &col);
    }
    let mut b = ControlJacobian::zeros();
    for j in 0..CONTROL_DIM {
        let h = step_size(u[j]);
        let (mut up, mut um) = (u, u);
        up[j] += h;
        um[j] -= h;
        let col = state_diff(&eval(&x, &up)?, &eval(&x, &um)?) / (h + h);
        b.set_column(j, &col);
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    Ok((a, b))
}
