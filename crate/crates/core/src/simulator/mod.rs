//! Synthetic constellations, truth trajectories and raw measurements.

mod orbit;
mod scenario;
mod synth;
mod trajectory;

use thiserror::Error;

pub use orbit::{generate_constellation, propagate_satellite, OrbitElements, GM_EARTH};
pub use scenario::{
    default_klobuchar, ConstellationCounts, CycleSlip, NoiseConfig, Origin, ReceiverClock, SatelliteClockConfig,
    ScenarioConfig, TrajectorySpec,
};
pub use synth::{simulate, SimulatedData, Simulator};
pub use trajectory::{generate_trajectory, Motion, TruthRecord, WaypointPath};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulatorError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("invalid waypoints: {0}")]
    InvalidWaypoints(String),
}
