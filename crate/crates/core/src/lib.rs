//! Bearing-based leader–follower formation control with internal-model
//! disturbance rejection for double-integrator agents.

// `!(x > 0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod disturbance;
pub mod error;
pub mod graph;
pub mod internal_model;
pub mod linalg;
pub mod scalar;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type BearingSetF64 = graph::BearingSet<f64>;
pub type BearingLaplacianF64 = graph::BearingLaplacian<f64>;
pub type DisturbanceSpecF64 = disturbance::DisturbanceSpec<f64>;
pub type InternalModelF64 = internal_model::InternalModel<f64>;
pub type SimulationF64 = sim::Simulation<f64>;
pub type SimulationConfigF64 = sim::SimulationConfig<f64>;
pub type TrajectoryF64 = sim::Trajectory<f64>;

pub type BearingSetF32 = graph::BearingSet<f32>;
pub type BearingLaplacianF32 = graph::BearingLaplacian<f32>;
pub type DisturbanceSpecF32 = disturbance::DisturbanceSpec<f32>;
pub type InternalModelF32 = internal_model::InternalModel<f32>;
pub type SimulationF32 = sim::Simulation<f32>;
pub type SimulationConfigF32 = sim::SimulationConfig<f32>;
pub type TrajectoryF32 = sim::Trajectory<f32>;
