//! Robust secondary-control synthesis: LMI assembly, the embedded SDP solver
//! and the multiplier search.

pub mod lmi;
pub mod sdp;
pub mod search;

pub use lmi::{recover_gain, solve_point, BlockStructure, Certificate, Hyper, PointOutcome, SynthesisProblem, SynthesisResult};
pub use search::{search_hyperparameters, SearchGrid, SearchReport, SynthesisTemplate};
