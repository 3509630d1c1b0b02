//! Agent-based simulation of household return after a disaster, driven by a
//! three-layer network of homes, points of interest and physical infrastructure.

pub mod analysis;
pub mod config;
pub mod decision;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod sweep;

pub use decision::DecisionModel;
pub use engine::{run, RunSpec, Trajectory};
pub use error::{Error, Result};
pub use scenario::{Scenario, ScenarioConfig};
