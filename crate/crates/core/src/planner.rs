//! The four planning pipelines.
//!
//! * ZS: reaching cost, zero initial controls.
//! * DS: reaching cost, initial controls taken from the nearest demonstration.
//! * DP: reaching cost plus demonstration tracking terms, zero initial controls.
//! * WS: DP first, then the reaching cost initialized with the DP solution.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{target_state, CostError, DpCost, DsCost};
use crate::ddp::{self, DdpError, ReportSummary, SolverOptions};
use crate::demo::{resample, DemoError, DemoLibrary, Demonstration, Symmetry};
use crate::pushdyn::{self, Face};
use crate::scalar::wrap_angle;
use crate::{Control, HybridState, SliderParams, SolveReport, Trajectory, Weights};

pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Solver(#[from] DdpError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ZS")]
    Zs,
    #[serde(rename = "DS")]
    Ds,
    #[serde(rename = "DP")]
    Dp,
    #[serde(rename = "WS")]
    Ws,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Zs, Method::Ds, Method::Dp, Method::Ws];

    pub fn name(self) -> &'static str {
        match self {
            Method::Zs => "ZS",
            Method::Ds => "DS",
            Method::Dp => "DP",
            Method::Ws => "WS",
        }
    }

    pub fn needs_demos(self) -> bool {
        self != Method::Zs
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-DDP", self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown method `{0}` (expected zs, ds, dp or ws)")]
pub struct MethodParseError(String);

impl FromStr for Method {
    type Err = MethodParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_suffix("-ddp").unwrap_or(&key);
        match key {
            "zs" => Ok(Method::Zs),
            "ds" => Ok(Method::Ds),
            "dp" => Ok(Method::Dp),
            "ws" => Ok(Method::Ws),
            _ => Err(MethodParseError(s.to_owned())),
        }
    }
}

/// Initial control guess of the DP stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DpInit {
    #[default]
    Zeros,
    Demo,
}

/// Success thresholds on the terminal slider pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { x: 0.01, y: 0.01, theta: 5f64.to_radians() }
    }
}

impl Thresholds {
    pub fn scaled(&self, factor: f64) -> Self {
        Self { x: self.x * factor, y: self.y * factor, theta: self.theta * factor }
    }
}

/// Terminal pose error; heading wrapped into `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PoseError {
    pub fn between(reached: &Vector3<f64>, target: &Vector3<f64>) -> Self {
        Self { x: reached[0] - target[0], y: reached[1] - target[1], theta: wrap_angle(reached[2] - target[2]) }
    }

    pub fn within(&self, th: &Thresholds) -> bool {
        self.x.abs() < th.x && self.y.abs() < th.y && self.theta.abs() < th.theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub x0: HybridState,
    pub target: Vector3<f64>,
    pub method: Method,
    pub weights: Weights,
    pub options: SolverOptions,
    pub horizon: usize,
    pub dt: f64,
    pub params: SliderParams,
    pub dp_init: DpInit,
    /// Number of nearest demonstrations considered by the selector.
    pub k: usize,
    /// Map every demonstration onto the start face of `x0` (and its mirror
    /// image) before selection.
    pub align_demos: bool,
}

impl PlanRequest {
    /// Request from the slider at the origin with the pusher pre-placed by [`initial_state`].
    pub fn new(target: Vector3<f64>, method: Method) -> Self {
        let params = SliderParams::default();
        Self {
            x0: initial_state(&Vector3::zeros(), &target, &params),
            target,
            method,
            weights: Weights::default(),
            options: SolverOptions::default(),
            horizon: DEFAULT_HORIZON,
            dt: DEFAULT_DT,
            params,
            dp_init: DpInit::Zeros,
            k: 1,
            align_demos: true,
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self { method, ..self.clone() }
    }
}

/// Start state: slider at `slider_pose`, pusher at rest at the centre of the
/// face whose outward normal is most opposed to the target displacement, at a
/// gap of `contact_tol`. Ties go to the lowest face index.
pub fn initial_state(slider_pose: &Vector3<f64>, target: &Vector3<f64>, params: &SliderParams) -> HybridState {
    let world = Vector2::new(target[0] - slider_pose[0], target[1] - slider_pose[1]);
    let body = crate::pushdyn::rotation(slider_pose[2]).transpose() * world;
    let mut best = Face::PosX;
    for face in Face::ALL {
        if face.normal::<f64>().dot(&body) < best.normal::<f64>().dot(&body) {
            best = face;
        }
    }
    let pusher = best.normal::<f64>() * (params.half_side + params.contact_tol);
    HybridState::new(*slider_pose, pusher, Vector2::zeros())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub method: Method,
    pub target: Vector3<f64>,
    pub trajectory: Trajectory,
    pub report: SolveReport,
    pub errors: PoseError,
    pub success: bool,
    pub selected_demo_id: Option<String>,
    /// DP stage report of a WS plan.
    pub inner_report: Option<SolveReport>,
}

impl PlanResult {
    fn new(
        req: &PlanRequest,
        trajectory: Trajectory,
        report: SolveReport,
        selected_demo_id: Option<String>,
        inner_report: Option<SolveReport>,
    ) -> Self {
        let errors = PoseError::between(&trajectory.final_state().slider_pose, &req.target);
        Self {
            method: req.method,
            target: req.target,
            success: errors.within(&Thresholds::default()),
            trajectory,
            report,
            errors,
            selected_demo_id,
            inner_report,
        }
    }

    /// Success recomputed from the stored trajectory.
    pub fn recompute_success(&self, th: &Thresholds) -> bool {
        PoseError::between(&self.trajectory.final_state().slider_pose, &self.target).within(th)
    }

    pub fn to_json(&self) -> PlanResultJson {
        PlanResultJson {
            method: self.method,
            target: self.target.into(),
            success: self.success,
            errors: self.errors,
            selected_demo_id: self.selected_demo_id.clone(),
            report: self.report.summary(),
            inner_report: self.inner_report.as_ref().map(SolveReport::summary),
            dt: self.trajectory.dt,
            states: self.trajectory.states.iter().map(|s| s.to_vector().into()).collect(),
            controls: self.trajectory.controls.iter().map(|u| u.accel.into()).collect(),
            modes: self.trajectory.modes.iter().map(ToString::to_string).collect(),
        }
    }
}

/// Serialized form of a [`PlanResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResultJson {
    pub method: Method,
    pub target: [f64; 3],
    pub success: bool,
    pub errors: PoseError,
    pub selected_demo_id: Option<String>,
    pub report: ReportSummary,
    pub inner_report: Option<ReportSummary>,
    pub dt: f64,
    pub states: Vec<[f64; 7]>,
    pub controls: Vec<[f64; 2]>,
    pub modes: Vec<String>,
}

fn ds_cost(req: &PlanRequest) -> DsCost<f64> {
    DsCost::new(target_state(&req.target), req.weights.clone())
}

fn solve(req: &PlanRequest, u_init: &[Control], cost: &(impl ddp::CostModel<f64> + ?Sized)) -> Result<(Trajectory, SolveReport), PlanError> {
    Ok(ddp::solve(&req.x0, u_init, cost, &req.options, req.dt, &req.params)?)
}

pub fn plan_zs(req: &PlanRequest) -> Result<PlanResult, PlanError> {
    let u_init = vec![Control::zero(); req.horizon];
    let (traj, report) = solve(req, &u_init, &ds_cost(req))?;
    Ok(PlanResult::new(req, traj, report, None, None))
}

/// Candidate demonstrations for `req`. With alignment on, each recording is
/// carried by a slider symmetry onto the request's start face, once as is and
/// once mirrored (id suffix `/mirror`).
pub fn demo_candidates(req: &PlanRequest, library: &DemoLibrary) -> Result<DemoLibrary, PlanError> {
    if !req.align_demos {
        return Ok(library.clone());
    }
    let Some(start) = pushdyn::active_face(&req.x0.pusher_pos, &req.params).map(|fc| fc.face) else {
        return Ok(library.clone());
    };
    let mut out = Vec::with_capacity(2 * library.demos.len());
    for d in &library.demos {
        let from = d.start_face(&req.params).unwrap_or(start);
        out.push(d.transformed(Symmetry::mapping(from, start, false), d.id.clone()));
        out.push(d.transformed(Symmetry::mapping(from, start, true), format!("{}/mirror", d.id)));
    }
    Ok(DemoLibrary::new(out)?)
}

fn select_demo(req: &PlanRequest, library: &DemoLibrary) -> Result<Demonstration, PlanError> {
    let candidates = demo_candidates(req, library)?;
    Ok(candidates.select(&req.target, req.k)?.clone())
}

pub fn plan_ds(req: &PlanRequest, library: &DemoLibrary) -> Result<PlanResult, PlanError> {
    let demo = select_demo(req, library)?;
    let aligned = resample(&demo, req.horizon, req.dt);
    let (traj, report) = solve(req, &aligned.controls(), &ds_cost(req))?;
    Ok(PlanResult::new(req, traj, report, Some(demo.id), None))
}

/// Demonstration-penalized cost for `req`, with the id of the selected demonstration.
pub fn dp_cost(req: &PlanRequest, library: &DemoLibrary) -> Result<(DpCost<f64>, Vec<Control>, String), PlanError> {
    let demo = select_demo(req, library)?;
    let aligned = resample(&demo, req.horizon, req.dt);
    let u_init = match req.dp_init {
        DpInit::Zeros => vec![Control::zero(); req.horizon],
        DpInit::Demo => aligned.controls(),
    };
    let mut refs = aligned.refs;
    refs.target = target_state(&req.target);
    Ok((DpCost::new(refs, req.weights.clone())?, u_init, demo.id))
}

pub fn plan_dp(req: &PlanRequest, library: &DemoLibrary) -> Result<PlanResult, PlanError> {
    let (cost, u_init, id) = dp_cost(req, library)?;
    let (traj, report) = solve(req, &u_init, &cost)?;
    Ok(PlanResult::new(req, traj, report, Some(id), None))
}

pub fn plan_ws(req: &PlanRequest, library: &DemoLibrary) -> Result<PlanResult, PlanError> {
    let stage1 = plan_dp(&req.with_method(Method::Dp), library)?;
    refine_ws(req, stage1)
}

/// Second WS stage: the reaching cost initialized with a DP solution.
pub fn refine_ws(req: &PlanRequest, stage1: PlanResult) -> Result<PlanResult, PlanError> {
    let (traj, report) = solve(req, &stage1.trajectory.controls, &ds_cost(req))?;
    Ok(PlanResult::new(req, traj, report, stage1.selected_demo_id, Some(stage1.report)))
}

/// Dispatches on `req.method`; `library` is required for every method but ZS.
pub fn plan(req: &PlanRequest, library: Option<&DemoLibrary>) -> Result<PlanResult, PlanError> {
    let empty = DemoLibrary::default();
    let lib = library.unwrap_or(&empty);
    match req.method {
        Method::Zs => plan_zs(req),
        Method::Ds => plan_ds(req, lib),
        Method::Dp => plan_dp(req, lib),
        Method::Ws => plan_ws(req, lib),
    }
}
