//! File formats: RINEX observations, CSV tables, graph JSON and the TOML
//! configuration.

mod graph_json;
mod rinex;
mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnss::GpsTime;
use crate::pipeline::PipelineConfig;
use crate::simulator::ScenarioConfig;

pub use graph_json::{read_graph_json, write_graph_json, EdgeExport, EdgeKind, GraphExport, NodeExport};
pub use rinex::{
    glonass_channels, parse_bytes, parse_rinex_obs, parse_rinex_obs_with, write_rinex_obs, RinexError, RinexHeader,
    RinexObs, RinexOptions,
};
pub use tables::{
    read_satellite_states, read_trajectory_csv, write_satellite_states, write_trajectory_csv, SatelliteSidecar,
    TrajectoryRecord, TrajectoryStatus,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Rinex(#[from] RinexError),
    #[error("CSV: {0}")]
    Csv(String),
    #[error("JSON: {0}")]
    Json(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    InvalidValue(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("no satellite states for epoch {time}")]
    MissingSatelliteStates { time: GpsTime },
}

impl IoError {
    /// True for failures of the underlying reader or writer rather than
    /// of the content.
    pub fn is_io(&self) -> bool {
        matches!(self, IoError::Io(_) | IoError::Rinex(RinexError::Io(_)))
    }
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => IoError::Io(io),
                other => IoError::Csv(format!("{other:?}")),
            }
        } else {
            IoError::Csv(e.to_string())
        }
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            IoError::Io(e.into())
        } else {
            IoError::Json(e.to_string())
        }
    }
}

/// Configuration file: the scenario to simulate and the solver settings.
/// Every key is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    pub solver: PipelineConfig,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::TrajectorySpec;

    #[test]
    fn config_round_trip() {
        let mut c = ConfigFile::default();
        c.scenario.seed = 7;
        c.scenario.trajectory = TrajectorySpec::Circle { radius: 30.0 };
        c.solver.use_trrtk = false;
        c.solver.graph.known_start = Some([1.0, 2.0, 3.0]);
        let text = c.to_toml().unwrap();
        assert_eq!(ConfigFile::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c = ConfigFile::from_toml("[scenario]\nseed = 3\nduration = 50.0\n[solver.trrtk]\nratio_threshold = 2.5\n")
            .unwrap();
        assert_eq!(c.scenario.seed, 3);
        assert_eq!(c.scenario.duration, 50.0);
        assert_eq!(c.solver.trrtk.ratio_threshold, 2.5);
        assert_eq!(c.solver.trrtk.max_time_difference, 100.0);
        assert!(matches!(ConfigFile::from_toml("[scenario]\nseed = \"x\""), Err(IoError::Config(_))));
    }
}
