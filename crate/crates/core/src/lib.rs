//! Modeling, robust secondary-control synthesis and attack-scenario analysis
//! for networks of droop-controlled inverters with distributed-averaging
//! proportional-integral (DAPI) secondary control.

// `!(x > 0.0)` is the idiom for rejecting NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod error;
pub mod model;
pub mod network;
pub mod presets;
pub mod sim;
pub mod synthesis;

pub use nalgebra::{DMatrix, DVector};

pub use error::{Error, Result};
pub use model::{aggregate, CouplingSpec, DerParams, GainMatrix, SystemMatrices};
pub use network::{DerState, Disturbance, GridTopology, LoadBus};
pub use sim::{Scenario, TrajectoryLog};
