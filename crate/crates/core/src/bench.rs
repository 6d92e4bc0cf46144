//! Seeded benchmark over random slider targets.
//!
//! Targets come from ChaCha8 seeded with the little-endian bytes of the
//! 64-bit seed, zero-padded to 32 bytes. Each target consumes three `u64`
//! draws in the order x, y, theta; a draw maps to `[0, 1)` through its top
//! 53 bits. Coordinates are `lo + (hi - lo) * u` for x and y, and
//! `pi - 2 pi u` for theta, which lands in `(-pi, pi]`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector3;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddp::{SolverOptions, Termination};
use crate::demo::DemoLibrary;
use crate::planner::{self, initial_state, DpInit, Method, PlanError, PlanRequest, PlanResult, PoseError, Thresholds};
use crate::{SliderParams, Weights};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("n_targets must be at least 1")]
    NoTargets,
    #[error("no methods requested")]
    NoMethods,
    #[error("methods {0:?} need a demonstration library")]
    MissingLibrary(Vec<Method>),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("records line {line}: {source}")]
    Record { line: usize, source: serde_json::Error },
}

/// Box of target poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpace {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Default for TaskSpace {
    fn default() -> Self {
        Self { x: (-0.25, 0.25), y: (-0.25, 0.25) }
    }
}

impl TaskSpace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (self.x.0..=self.x.1).contains(&p[0])
            && (self.y.0..=self.y.1).contains(&p[1])
            && p[2] > -PI
            && p[2] <= PI
    }
}

fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Endless stream of targets for `seed`; [`sample_targets`] takes a prefix.
pub fn target_stream(seed: u64, space: TaskSpace) -> impl Iterator<Item = Vector3<f64>> {
    let mut rng = rng_from_seed(seed);
    std::iter::repeat_with(move || {
        let x = space.x.0 + (space.x.1 - space.x.0) * unit(&mut rng);
        let y = space.y.0 + (space.y.1 - space.y.0) * unit(&mut rng);
        let theta = PI - 2.0 * PI * unit(&mut rng);
        Vector3::new(x, y, theta)
    })
}

pub fn sample_targets(seed: u64, n: usize, space: TaskSpace) -> Vec<Vector3<f64>> {
    target_stream(seed, space).take(n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_targets: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub thresholds: Thresholds,
    pub weights: Weights,
    pub options: SolverOptions,
    pub params: SliderParams,
    pub horizon: usize,
    pub dt: f64,
    pub dp_init: DpInit,
    pub k: usize,
    pub align_demos: bool,
    pub space: TaskSpace,
    /// Worker threads; 0 picks the rayon default.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_targets: 100,
            seed: 42,
            methods: Method::ALL.to_vec(),
            thresholds: Thresholds::default(),
            weights: Weights::default(),
            options: SolverOptions::default(),
            params: SliderParams::default(),
            horizon: planner::DEFAULT_HORIZON,
            dt: planner::DEFAULT_DT,
            dp_init: DpInit::Zeros,
            k: 1,
            align_demos: true,
            space: TaskSpace::default(),
            jobs: 0,
        }
    }
}

impl BenchConfig {
    pub fn request(&self, target: Vector3<f64>, method: Method) -> PlanRequest {
        PlanRequest {
            x0: initial_state(&Vector3::zeros(), &target, &self.params),
            target,
            method,
            weights: self.weights.clone(),
            options: self.options.clone(),
            horizon: self.horizon,
            dt: self.dt,
            params: self.params,
            dp_init: self.dp_init,
            k: self.k,
            align_demos: self.align_demos,
        }
    }
}

/// Outcome of one method on one target. Wall time is kept out of the
/// serialized form so record files are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub index: usize,
    pub method: Method,
    pub target: [f64; 3],
    pub x_err_cm: f64,
    pub y_err_cm: f64,
    pub theta_err_rad: f64,
    pub success: bool,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Option<Termination>,
    pub final_cost: Option<f64>,
    pub selected_demo_id: Option<String>,
    pub failure: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TargetRecord {
    fn from_result(index: usize, result: &PlanResult, wall_time_s: f64) -> Self {
        let inner_iters = result.inner_report.as_ref().map_or(0, |r| r.iterations);
        Self {
            index,
            method: result.method,
            target: result.target.into(),
            x_err_cm: result.errors.x * 100.0,
            y_err_cm: result.errors.y * 100.0,
            theta_err_rad: result.errors.theta,
            success: result.success,
            iterations: result.report.iterations + inner_iters,
            converged: result.report.converged,
            termination: Some(result.report.termination_reason),
            final_cost: Some(result.report.final_cost()),
            selected_demo_id: result.selected_demo_id.clone(),
            failure: None,
            wall_time_s,
        }
    }

    /// A pipeline error leaves the slider where it started.
    fn from_error(index: usize, method: Method, target: Vector3<f64>, err: &PlanError, wall_time_s: f64) -> Self {
        let e = PoseError::between(&Vector3::zeros(), &target);
        Self {
            index,
            method,
            target: target.into(),
            x_err_cm: e.x * 100.0,
            y_err_cm: e.y * 100.0,
            theta_err_rad: e.theta,
            success: false,
            iterations: 0,
            converged: false,
            termination: None,
            final_cost: None,
            selected_demo_id: None,
            failure: Some(err.to_string()),
            wall_time_s,
        }
    }

    /// Success under `th`, recomputed from the stored errors.
    pub fn rescore(&self, th: &Thresholds) -> bool {
        self.failure.is_none()
            && self.x_err_cm.abs() < th.x * 100.0
            && self.y_err_cm.abs() < th.y * 100.0
            && self.theta_err_rad.abs() < th.theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub method: Method,
    pub x_err_mean_cm: f64,
    pub x_err_std_cm: f64,
    pub y_err_mean_cm: f64,
    pub y_err_std_cm: f64,
    pub theta_err_mean_rad: f64,
    pub theta_err_std_rad: f64,
    pub success_rate: f64,
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-method statistics over signed errors, in canonical method order.
pub fn aggregate(records: &[TargetRecord]) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for method in Method::ALL {
        let rs: Vec<&TargetRecord> = records.iter().filter(|r| r.method == method).collect();
        if rs.is_empty() {
            continue;
        }
        let col = |f: fn(&TargetRecord) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (xm, xs) = col(|r| r.x_err_cm);
        let (ym, ys) = col(|r| r.y_err_cm);
        let (tm, ts) = col(|r| r.theta_err_rad);
        let successes = rs.iter().filter(|r| r.success).count();
        rows.push(StatsRow {
            method,
            x_err_mean_cm: xm,
            x_err_std_cm: xs,
            y_err_mean_cm: ym,
            y_err_std_cm: ys,
            theta_err_mean_rad: tm,
            theta_err_std_rad: ts,
            success_rate: successes as f64 / rs.len() as f64,
        });
    }
    rows
}

/// Records with `success` recomputed under `th`.
pub fn rescore(records: &[TargetRecord], th: &Thresholds) -> Vec<TargetRecord> {
    records.iter().map(|r| TargetRecord { success: r.rescore(th), ..r.clone() }).collect()
}

fn run_target(config: &BenchConfig, library: Option<&DemoLibrary>, index: usize, target: Vector3<f64>) -> Vec<TargetRecord> {
    let mut out = Vec::with_capacity(config.methods.len());
    let mut dp_result: Option<PlanResult> = None;
    for &method in &config.methods {
        let req = config.request(target, method);
        let start = Instant::now();
        let result = match (method, &dp_result) {
            // The DP stage of WS is exactly the DP plan, so reuse it when present.
            (Method::Ws, Some(dp)) => planner::refine_ws(&req, dp.clone()),
            _ => planner::plan(&req, library),
        };
        let elapsed = start.elapsed().as_secs_f64();
        out.push(match &result {
            Ok(r) => TargetRecord::from_result(index, r, elapsed),
            Err(e) => TargetRecord::from_error(index, method, target, e, elapsed),
        });
        if method == Method::Dp {
            dp_result = result.ok();
        }
    }
    out
}

/// Runs every requested method on every sampled target. Records are ordered by
/// target index, then by method in canonical order, whatever the worker count.
pub fn evaluate(config: &BenchConfig, library: Option<&DemoLibrary>) -> Result<(Vec<StatsRow>, Vec<TargetRecord>), BenchError> {
    if config.n_targets == 0 {
        return Err(BenchError::NoTargets);
    }
    let mut config = config.clone();
    config.methods.sort();
    config.methods.dedup();
    if config.methods.is_empty() {
        return Err(BenchError::NoMethods);
    }
    let needing: Vec<Method> = config.methods.iter().copied().filter(|m| m.needs_demos()).collect();
    if !needing.is_empty() && library.is_none_or(DemoLibrary::is_empty) {
        return Err(BenchError::MissingLibrary(needing));
    }
    let targets = sample_targets(config.seed, config.n_targets, config.space);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let nested: Vec<Vec<TargetRecord>> = pool.install(|| {
        targets.par_iter().enumerate().map(|(i, t)| run_target(&config, library, i, *t)).collect()
    });
    let records: Vec<TargetRecord> = nested.into_iter().flatten().collect();
    Ok((aggregate(&records), records))
}

pub fn records_to_jsonl(records: &[TargetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<TargetRecord>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| BenchError::Record { line: i + 1, source }))
        .collect()
}

pub fn to_csv(rows: &[StatsRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv(text: &str) -> Result<Vec<StatsRow>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Table with one row per method, sorted ZS, DS, DP, WS.
pub fn to_markdown(rows: &[StatsRow]) -> String {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.method);
    let mut out = String::from("| Method | x_err (cm) | y_err (cm) | θ_err (rad) | succ_rate |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in &sorted {
        let _ = writeln!(
            out,
            "| {} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.2} ± {:.2} | {:.0}% |",
            r.method,
            r.x_err_mean_cm,
            r.x_err_std_cm,
            r.y_err_mean_cm,
            r.y_err_std_cm,
            r.theta_err_mean_rad,
            r.theta_err_std_rad,
            r.success_rate * 100.0
        );
    }
    out
}
