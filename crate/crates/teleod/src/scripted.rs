//! Deterministic scripted operator. It plays the role of the mouse: every tick
//! it looks at the session and picks a goal position for the pusher.
//! The shipped demonstration fixtures are produced this way.

use std::path::Path;

use nalgebra::{Vector2, Vector3};

use pushplan::demo::{DemoError, Demonstration};
use pushplan::pushdyn::{rotation, DynamicsError, Face};
use pushplan::{wrap_angle, HybridState, SliderParams};

use crate::session::SessionState;

/// Clearance kept from the slider while moving between faces (m).
const STANDOFF: f64 = 0.02;
/// Distance at which a waypoint counts as reached (m).
const WAYPOINT_TOL: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Until {
    Ticks(u64),
    /// Slider heading has turned by this signed amount since the phase began.
    Rotated(f64),
    /// Slider centre has travelled this far since the phase began (m).
    Travelled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Phase {
    /// Keep the goal `depth` inside `face`, `offset` along its tangent.
    Push { face: Face, offset: f64, depth: f64, until: Until, max_ticks: u64 },
    /// Leave the current face and line up `offset` along the tangent of `to`,
    /// passing the corners listed in `via`.
    Switch { from: Face, to: Face, offset: f64, via: Vec<Face> },
    /// No goal: the pusher brakes.
    Idle { ticks: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub id: String,
    pub phases: Vec<Phase>,
}

fn body_to_world(pose: &Vector3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    pose.xy() + rotation(pose[2]) * p
}

/// Body-frame waypoints for a face switch.
fn switch_waypoints(from: Face, to: Face, offset: f64, via: &[Face], pusher_body: &Vector2<f64>, half: f64) -> Vec<Vector2<f64>> {
    let s = half + STANDOFF;
    let n_from: Vector2<f64> = from.normal();
    let t_from: Vector2<f64> = from.tangent();
    let along = t_from.dot(pusher_body);
    let mut pts = vec![n_from * s + t_from * along];
    let mut prev = from;
    for &f in via.iter().chain(std::iter::once(&to)) {
        pts.push(prev.normal::<f64>() * s + f.normal::<f64>() * s);
        prev = f;
    }
    pts.push(to.normal::<f64>() * s + to.tangent::<f64>() * offset);
    pts
}

struct Runner<'a> {
    session: &'a mut SessionState,
}

impl Runner<'_> {
    fn run_phase(&mut self, phase: &Phase) -> Result<(), DynamicsError> {
        let half = self.session.params.half_side;
        match phase {
            Phase::Push { face, offset, depth, until, max_ticks } => {
                let start = self.session.state.slider_pose;
                let mut turned = 0.0;
                let mut last_theta = start[2];
                for k in 0..*max_ticks {
                    let done = match *until {
                        Until::Ticks(n) => k >= n,
                        Until::Rotated(r) => turned * r.signum() >= r.abs(),
                        Until::Travelled(d) => (self.session.state.slider_pose.xy() - start.xy()).norm() >= d,
                    };
                    if done {
                        break;
                    }
                    let n: Vector2<f64> = face.normal();
                    let t: Vector2<f64> = face.tangent();
                    let goal_body = n * (half - depth) + t * *offset;
                    self.session.mouse_goal = Some(body_to_world(&self.session.state.slider_pose, &goal_body));
                    self.session.tick()?;
                    let theta = self.session.state.slider_pose[2];
                    turned += wrap_angle(theta - last_theta);
                    last_theta = theta;
                }
            }
            Phase::Switch { from, to, offset, via } => {
                let pose = self.session.state.slider_pose;
                let rel = rotation(pose[2]).transpose() * (self.session.state.pusher_world() - pose.xy());
                for wp in switch_waypoints(*from, *to, *offset, via, &rel, half) {
                    for _ in 0..500 {
                        let goal = body_to_world(&self.session.state.slider_pose, &wp);
                        if (self.session.state.pusher_world() - goal).norm() < WAYPOINT_TOL {
                            break;
                        }
                        self.session.mouse_goal = Some(goal);
                        self.session.tick()?;
                    }
                }
            }
            Phase::Idle { ticks } => {
                self.session.mouse_goal = None;
                for _ in 0..*ticks {
                    self.session.tick()?;
                }
            }
        }
        Ok(())
    }
}

/// Runs `script` from `x0` with recording on and returns the final session.
pub fn perform(script: &Script, x0: HybridState, target: Vector3<f64>, params: SliderParams) -> Result<SessionState, DynamicsError> {
    let mut session = SessionState::new(x0, params);
    session.reset(target);
    session.set_recording(true);
    let mut runner = Runner { session: &mut session };
    for phase in &script.phases {
        runner.run_phase(phase)?;
    }
    Ok(session)
}

/// Records `script` twice: once to find the pose it reaches, then again with
/// that pose as the session target.
pub fn record(script: &Script, x0: HybridState, params: SliderParams) -> Result<Demonstration, DynamicsError> {
    let probe = perform(script, x0, x0.slider_pose, params)?;
    let reached = probe.state.slider_pose;
    let session = perform(script, x0, reached, params)?;
    Ok(session.demonstration(&script.id).expect("scripts take at least one tick"))
}

/// Start state shared by every fixture: slider at the origin, pusher resting
/// just behind the -x face.
pub fn fixture_start(params: &SliderParams) -> HybridState {
    HybridState::new(
        Vector3::zeros(),
        Vector2::new(-(params.half_side + params.contact_tol), 0.0),
        Vector2::zeros(),
    )
}

/// The three shipped scripts, with zero, one and two face switches.
pub fn fixture_scripts() -> Vec<Script> {
    use Face::*;
    let push = |face, offset, turn| Phase::Push { face, offset, depth: 0.015, until: Until::Rotated(turn), max_ticks: 800 };
    vec![
        Script { id: "ns0".into(), phases: vec![push(NegX, 0.03, 1.5)] },
        Script {
            id: "ns1".into(),
            phases: vec![
                push(NegX, -0.035, -1.0),
                Phase::Switch { from: NegX, to: PosX, offset: -0.035, via: vec![NegY] },
                push(PosX, -0.035, -1.0),
            ],
        },
        Script {
            id: "ns2".into(),
            phases: vec![
                push(NegX, 0.035, 0.9),
                Phase::Switch { from: NegX, to: PosX, offset: 0.035, via: vec![PosY] },
                push(PosX, 0.035, 0.9),
                Phase::Switch { from: PosX, to: NegX, offset: 0.035, via: vec![NegY] },
                push(NegX, 0.035, 0.9),
            ],
        },
    ]
}

/// Records every fixture script.
pub fn fixtures(params: &SliderParams) -> Result<Vec<Demonstration>, DynamicsError> {
    fixture_scripts().iter().map(|s| record(s, fixture_start(params), *params)).collect()
}

/// Writes `<id>.demo.jsonl` for every fixture into `dir`.
pub fn write_fixtures(dir: &Path, params: &SliderParams) -> Result<Vec<Demonstration>, FixtureError> {
    let demos = fixtures(params)?;
    for d in &demos {
        d.save(dir.join(format!("{}{}", d.id, pushplan::demo::DEMO_EXTENSION)))?;
    }
    Ok(demos)
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Demo(#[from] DemoError),
}
