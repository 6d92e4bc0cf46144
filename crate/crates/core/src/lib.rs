//! Demonstration-guided trajectory optimization for planar pushing.
//!
//! The numerical core ([`pushdyn`], [`ddp`], [`cost`]) is generic over the
//! scalar type; the demonstration, planning and benchmark layers work in `f64`.

pub mod bench;
pub mod config;
pub mod cost;
pub mod ddp;
pub mod demo;
pub mod planner;
pub mod pushdyn;
pub mod scalar;

pub use scalar::{wrap_angle, Real};

pub type SliderParams = pushdyn::SliderParams<f64>;
pub type HybridState = pushdyn::HybridState<f64>;
pub type Control = pushdyn::Control<f64>;
pub type Trajectory = ddp::Trajectory<f64>;
pub type SolveReport = ddp::SolveReport<f64>;
pub type Weights = cost::Weights<f64>;
pub type GuidanceRefs = cost::GuidanceRefs<f64>;
pub use pushdyn::{ContactMode, Face};
