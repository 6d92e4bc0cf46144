//! Simulation session driven by a position goal.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use pushplan::demo::{DemoSample, Demonstration};
use pushplan::pushdyn::{self, ContactMode, DynamicsError};
use pushplan::{Control, HybridState, SliderParams};

pub const DEFAULT_TICK: f64 = 0.02;

/// PD servo gains turning a goal position into a pusher acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoGains {
    /// Position gain (1/s^2).
    pub kp: f64,
    /// Velocity gain (1/s).
    pub kd: f64,
    /// Bound on the acceleration norm (m/s^2).
    pub a_max: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        Self { kp: 20.0, kd: 8.0, a_max: 2.0 * pushplan::Weights::default().u_limit }
    }
}

/// `kp (goal - pos) - kd vel`, scaled down to norm `a_max` if longer.
pub fn tracking_law(goal: &Vector2<f64>, pos: &Vector2<f64>, vel: &Vector2<f64>, gains: &ServoGains) -> Control {
    let mut a = (goal - pos) * gains.kp - vel * gains.kd;
    let n = a.norm();
    if n > gains.a_max {
        a *= gains.a_max / n;
    }
    Control { accel: a }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub state: HybridState,
    /// Slider pose the operator is asked to reach.
    pub target: Vector3<f64>,
    pub recording: bool,
    pub buffer: Vec<DemoSample>,
    pub tick: u64,
    pub mouse_goal: Option<Vector2<f64>>,
    pub dt_tick: f64,
    pub mode: ContactMode,
    pub params: SliderParams,
    pub gains: ServoGains,
    /// State restored by [`SessionState::reset`].
    pub x0: HybridState,
}

impl SessionState {
    pub fn new(x0: HybridState, params: SliderParams) -> Self {
        Self {
            state: x0,
            target: x0.slider_pose,
            recording: false,
            buffer: Vec::new(),
            tick: 0,
            mouse_goal: None,
            dt_tick: DEFAULT_TICK,
            mode: pushdyn::select_mode(&x0, &params),
            params,
            gains: ServoGains::default(),
            x0,
        }
    }

    /// Back to `x0` with a new target; stops and clears any recording.
    pub fn reset(&mut self, target: Vector3<f64>) {
        self.state = self.x0;
        self.target = target;
        self.recording = false;
        self.buffer.clear();
        self.tick = 0;
        self.mouse_goal = None;
        self.mode = pushdyn::select_mode(&self.x0, &self.params);
    }

    /// Turning recording on starts a fresh buffer.
    pub fn set_recording(&mut self, on: bool) {
        if on && !self.recording {
            self.buffer.clear();
        }
        self.recording = on;
    }

    /// Control for the current tick. Without a goal the pusher is braked.
    pub fn control(&self) -> Control {
        match &self.mouse_goal {
            Some(goal) => tracking_law(goal, &self.state.pusher_world(), &self.state.pusher_vel, &self.gains),
            None => {
                let brake = ServoGains { kp: 0.0, ..self.gains };
                tracking_law(&Vector2::zeros(), &Vector2::zeros(), &self.state.pusher_vel, &brake)
            }
        }
    }

    /// Advances the simulation by one tick.
    pub fn tick(&mut self) -> Result<(), DynamicsError> {
        let control = self.control();
        let (next, mode) = pushdyn::step(&self.state, &control, self.dt_tick, &self.params, None)?;
        if self.recording {
            let t = self.buffer.len() as f64 * self.dt_tick;
            self.buffer.push(DemoSample { t, state: self.state, control, mode });
        }
        self.state = next;
        self.mode = mode;
        self.tick += 1;
        Ok(())
    }

    /// The recording buffer as a demonstration, or `None` when it is empty.
    pub fn demonstration(&self, id: &str) -> Option<Demonstration> {
        if self.buffer.is_empty() {
            return None;
        }
        Some(Demonstration { id: id.to_owned(), target: self.target, dt_rec: self.dt_tick, samples: self.buffer.clone() })
    }
}
