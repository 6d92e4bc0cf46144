//! Demonstration records: storage, time alignment, switch extraction and
//! nearest-neighbour selection.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::target_state;
use crate::pushdyn::{self, ContactMode, StateVec, THETA};
use crate::scalar::wrap_angle;
use crate::{Control, GuidanceRefs, HybridState, SliderParams};

pub const FORMAT_VERSION: u32 = 1;
pub const DEMO_EXTENSION: &str = ".demo.jsonl";

/// Weight on the squared heading difference in the selection metric (m^2/rad^2).
pub const HEADING_WEIGHT: f64 = (0.25 / std::f64::consts::PI) * (0.25 / std::f64::consts::PI);

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("demonstration library is empty")]
    EmptyLibrary,
    #[error("duplicate demonstration id `{0}`")]
    DuplicateId(String),
    #[error("demonstration `{0}` has no samples")]
    NoSamples(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoSample {
    /// Recording time (s).
    pub t: f64,
    pub state: HybridState,
    /// Control applied from `state` to reach the next sample.
    pub control: Control,
    /// Mode used for that step.
    pub mode: ContactMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: String,
    /// Slider pose `(x, y, theta)` the demonstration reaches.
    pub target: Vector3<f64>,
    pub dt_rec: f64,
    pub samples: Vec<DemoSample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    id: String,
    target: [f64; 3],
    dt_rec: f64,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    t: f64,
    x: [f64; 7],
    u: [f64; 2],
    mode: ContactMode,
}

/// Number of face changes between consecutive contact modes, separations skipped.
pub fn count_switches(modes: impl IntoIterator<Item = ContactMode>) -> usize {
    let mut faces = modes.into_iter().filter_map(ContactMode::face);
    let Some(mut current) = faces.next() else {
        return 0;
    };
    let mut n = 0;
    for f in faces {
        if f != current {
            n += 1;
            current = f;
        }
    }
    n
}

impl Demonstration {
    pub fn n_switches(&self) -> usize {
        count_switches(self.samples.iter().map(|s| s.mode))
    }

    pub fn duration(&self) -> f64 {
        self.dt_rec * (self.samples.len().saturating_sub(1)) as f64
    }

    /// Largest per-component deviation between the stored states and a replay
    /// of the stored controls from the first sample.
    pub fn replay_error(&self, params: &SliderParams) -> Result<f64, pushdyn::DynamicsError> {
        let mut state = self.samples[0].state;
        let mut worst = 0.0f64;
        for pair in self.samples.windows(2) {
            let (next, _) = pushdyn::step(&state, &pair[0].control, self.dt_rec, params, None)?;
            let d = pushdyn::state_diff(&next.to_vector(), &pair[1].state.to_vector());
            worst = worst.max(d.amax());
            state = next;
        }
        Ok(worst)
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            id: self.id.clone(),
            target: [self.target[0], self.target[1], self.target[2]],
            dt_rec: self.dt_rec,
            version: FORMAT_VERSION,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for s in &self.samples {
            let v = s.state.to_vector();
            let line = SampleLine {
                t: s.t,
                x: std::array::from_fn(|i| v[i]),
                u: [s.control.accel[0], s.control.accel[1]],
                mode: s.mode,
            };
            out.push_str(&serde_json::to_string(&line).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DemoError> {
        let path = path.as_ref();
        let io_err = |source| DemoError::Io { path: path.to_path_buf(), source };
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DemoError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|source| DemoError::Io { path: path.to_path_buf(), source })?;
        Self::from_reader(BufReader::new(file), path)
    }

    pub fn from_reader(reader: impl BufRead, path: &Path) -> Result<Self, DemoError> {
        let schema = |line: usize, message: String| DemoError::Schema { path: path.to_path_buf(), line, message };
        let mut lines = reader.lines().enumerate();
        let header: Header = match lines.next() {
            Some((_, Ok(text))) => serde_json::from_str(&text).map_err(|e| schema(1, format!("header: {e}")))?,
            Some((_, Err(source))) => return Err(DemoError::Io { path: path.to_path_buf(), source }),
            None => return Err(schema(1, "missing header line".into())),
        };
        if header.version != FORMAT_VERSION {
            return Err(schema(1, format!("unsupported version {}", header.version)));
        }
        if header.dt_rec.is_nan() || header.dt_rec <= 0.0 {
            return Err(schema(1, "dt_rec must be positive".into()));
        }
        let mut samples = Vec::new();
        for (i, text) in lines {
            let text = text.map_err(|source| DemoError::Io { path: path.to_path_buf(), source })?;
            if text.trim().is_empty() {
                continue;
            }
            let line: SampleLine = serde_json::from_str(&text).map_err(|e| schema(i + 1, e.to_string()))?;
            samples.push(DemoSample {
                t: line.t,
                state: HybridState::from_vector(&StateVec::from_column_slice(&line.x)),
                control: Control::new(line.u[0], line.u[1]),
                mode: line.mode,
            });
        }
        if samples.is_empty() {
            return Err(DemoError::NoSamples(header.id));
        }
        Ok(Self { id: header.id, target: Vector3::from(header.target), dt_rec: header.dt_rec, samples })
    }
}

/// Symmetry of the square slider: reflection across the body x axis (applied
/// first, when `mirror` is set) followed by `quarter_turns` rotations of 90
/// degrees. World-frame vectors and body-frame pusher positions transform
/// alike, headings flip sign under the reflection and are otherwise kept, so a
/// transformed recording is again a solution of the same dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Symmetry {
    pub quarter_turns: u8,
    pub mirror: bool,
}

impl Symmetry {
    pub fn all() -> impl Iterator<Item = Symmetry> {
        [false, true].into_iter().flat_map(|mirror| (0..4).map(move |quarter_turns| Symmetry { quarter_turns, mirror }))
    }

    pub fn vector(&self, v: &Vector2<f64>) -> Vector2<f64> {
        let mut out = if self.mirror { Vector2::new(v[0], -v[1]) } else { *v };
        for _ in 0..self.quarter_turns % 4 {
            out = Vector2::new(-out[1], out[0]);
        }
        out
    }

    pub fn heading(&self, theta: f64) -> f64 {
        if self.mirror {
            wrap_angle(-theta)
        } else {
            theta
        }
    }

    pub fn pose(&self, pose: &Vector3<f64>) -> Vector3<f64> {
        let xy = self.vector(&pose.xy());
        Vector3::new(xy[0], xy[1], self.heading(pose[2]))
    }

    pub fn face(&self, face: crate::Face) -> crate::Face {
        let i = face.index();
        let i = if self.mirror { (4 - i) % 4 } else { i };
        crate::Face::from_index((i + self.quarter_turns as usize) % 4).expect("index below 4")
    }

    /// Reflection reverses the face tangents, so sliding directions swap.
    pub fn mode(&self, mode: ContactMode) -> ContactMode {
        match mode {
            ContactMode::Separation => mode,
            ContactMode::Sticking(f) => ContactMode::Sticking(self.face(f)),
            ContactMode::SlidingUp(f) if self.mirror => ContactMode::SlidingDown(self.face(f)),
            ContactMode::SlidingDown(f) if self.mirror => ContactMode::SlidingUp(self.face(f)),
            ContactMode::SlidingUp(f) => ContactMode::SlidingUp(self.face(f)),
            ContactMode::SlidingDown(f) => ContactMode::SlidingDown(self.face(f)),
        }
    }

    pub fn state(&self, s: &HybridState) -> HybridState {
        HybridState::new(self.pose(&s.slider_pose), self.vector(&s.pusher_pos), self.vector(&s.pusher_vel))
    }

    /// Smallest symmetry taking `from` onto `to`, optionally through the reflection.
    pub fn mapping(from: crate::Face, to: crate::Face, mirror: bool) -> Symmetry {
        (0..4u8)
            .map(|quarter_turns| Symmetry { quarter_turns, mirror })
            .find(|s| s.face(from) == to)
            .expect("some rotation maps any face onto any other")
    }
}

impl Demonstration {
    /// Image of the recording under `sym`, relabelled `id`.
    pub fn transformed(&self, sym: Symmetry, id: impl Into<String>) -> Demonstration {
        Demonstration {
            id: id.into(),
            target: sym.pose(&self.target),
            dt_rec: self.dt_rec,
            samples: self
                .samples
                .iter()
                .map(|s| DemoSample {
                    t: s.t,
                    state: sym.state(&s.state),
                    control: Control { accel: sym.vector(&s.control.accel) },
                    mode: sym.mode(s.mode),
                })
                .collect(),
        }
    }

    /// Face the pusher starts on (or nearest to).
    pub fn start_face(&self, params: &SliderParams) -> Option<crate::Face> {
        pushdyn::active_face(&self.samples[0].state.pusher_pos, params).map(|fc| fc.face)
    }
}

/// A demonstration aligned to the solver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDemo {
    /// `T + 1` interpolated states.
    pub states: Vec<HybridState>,
    /// Mode of the nearest recorded sample at each of the first `T` grid points.
    pub modes: Vec<ContactMode>,
    /// Time-dilation factor: demo duration over solver horizon.
    pub dilation: f64,
    pub refs: GuidanceRefs,
}

impl AlignedDemo {
    pub fn controls(&self) -> Vec<Control> {
        self.refs.acc_refs.iter().map(|a| Control { accel: *a }).collect()
    }
}

fn lerp_state(a: &HybridState, b: &HybridState, w: f64) -> HybridState {
    let (va, vb) = (a.to_vector(), b.to_vector());
    let mut v = va + (vb - va) * w;
    v[THETA] = wrap_angle(va[THETA] + w * wrap_angle(vb[THETA] - va[THETA]));
    HybridState::from_vector(&v)
}

/// Rescales `demo` uniformly in time onto `horizon` intervals of `dt`.
///
/// Velocity references scale with the dilation factor and acceleration
/// references with its square; interpolated states are kept as recorded.
pub fn resample(demo: &Demonstration, horizon: usize, dt: f64) -> AlignedDemo {
    assert!(horizon >= 1, "horizon must be positive");
    let n = demo.samples.len();
    let last = n - 1;
    let dilation = demo.duration() / (horizon as f64 * dt);
    let position = |k: usize| -> (usize, f64) {
        if last == 0 {
            return (0, 0.0);
        }
        // Sample-index coordinate of grid point k; exact when the grids coincide.
        let num = k * last;
        let (i, rem) = (num / horizon, num % horizon);
        if i >= last {
            (last, 0.0)
        } else {
            (i, rem as f64 / horizon as f64)
        }
    };
    let at = |k: usize| -> (HybridState, Vector2<f64>, ContactMode) {
        let (i, w) = position(k);
        let s = &demo.samples[i];
        if w == 0.0 {
            return (s.state, s.control.accel, s.mode);
        }
        let t = &demo.samples[i + 1];
        let state = lerp_state(&s.state, &t.state, w);
        let accel = s.control.accel + (t.control.accel - s.control.accel) * w;
        let mode = if w < 0.5 { s.mode } else { t.mode };
        (state, accel, mode)
    };

    let mut states = Vec::with_capacity(horizon + 1);
    let mut modes = Vec::with_capacity(horizon);
    let mut vel_refs = Vec::with_capacity(horizon);
    let mut acc_refs = Vec::with_capacity(horizon);
    for k in 0..=horizon {
        let (state, accel, mode) = at(k);
        states.push(state);
        if k < horizon {
            modes.push(mode);
            vel_refs.push(state.pusher_vel * dilation);
            acc_refs.push(accel * (dilation * dilation));
        }
    }
    let switch_states = switch_times(&modes).into_iter().map(|t| (t, states[t].to_vector())).collect();
    let refs = GuidanceRefs {
        target: target_state(&states[horizon].slider_pose),
        switch_states,
        vel_refs,
        acc_refs,
    };
    AlignedDemo { states, modes, dilation, refs }
}

/// Grid index of the last contact on the old face before every face change.
pub fn switch_times(modes: &[ContactMode]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last_contact: Option<(crate::Face, usize)> = None;
    for (t, mode) in modes.iter().enumerate() {
        let Some(face) = mode.face() else {
            continue;
        };
        if let Some((prev, idx)) = last_contact {
            if prev != face {
                out.push(idx);
            }
        }
        last_contact = Some((face, t));
    }
    out
}

/// Squared selection distance between two slider poses.
pub fn pose_distance_sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dth = wrap_angle(a[2] - b[2]);
    dx * dx + dy * dy + HEADING_WEIGHT * dth * dth
}

/// Immutable collection of demonstrations with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemoLibrary {
    pub demos: Vec<Demonstration>,
    pub source_path: Option<PathBuf>,
}

impl DemoLibrary {
    pub fn new(demos: Vec<Demonstration>) -> Result<Self, DemoError> {
        let mut seen = HashSet::new();
        for d in &demos {
            if !seen.insert(d.id.as_str()) {
                return Err(DemoError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Self { demos, source_path: None })
    }

    /// Loads every `*.demo.jsonl` in `dir`, ordered by file name.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DemoError> {
        let dir = dir.as_ref();
        let io_err = |source| DemoError::Io { path: dir.to_path_buf(), source };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(DEMO_EXTENSION)))
            .collect();
        paths.sort();
        let demos = paths.iter().map(Demonstration::load).collect::<Result<Vec<_>, _>>()?;
        let mut lib = Self::new(demos)?;
        lib.source_path = Some(dir.to_path_buf());
        Ok(lib)
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Demonstration> {
        self.demos.iter().find(|d| d.id == id)
    }

    /// Nearest demonstration to `target`; the `k` nearest are re-ranked by the
    /// same metric with ties broken by id.
    pub fn select(&self, target: &Vector3<f64>, k: usize) -> Result<&Demonstration, DemoError> {
        let mut ranked: Vec<(f64, &Demonstration)> =
            self.demos.iter().map(|d| (pose_distance_sq(target, &d.target), d)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        ranked.truncate(k.max(1));
        ranked
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)))
            .map(|(_, d)| d)
            .ok_or(DemoError::EmptyLibrary)
    }
}
