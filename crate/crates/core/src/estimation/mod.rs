//! Epoch-wise single point positioning and Doppler velocity estimation.

mod doppler;
mod spp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnss::{SatelliteId, SatelliteState};

pub use doppler::{solve_doppler_velocity, VelocitySolution};
pub use spp::{solve_spp, SppSolution};

/// Satellite states for one epoch, keyed by satellite.
pub type SatelliteStates = BTreeMap<SatelliteId, SatelliteState>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("insufficient satellites: {available} usable, {required} required")]
    InsufficientSatellites { available: usize, required: usize },
    #[error("least squares did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("singular geometry (normal matrix condition number {condition:.3e})")]
    SingularGeometry { condition: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationConfig {
    pub elevation_mask_deg: f64,
    /// Elevation-independent pseudorange error term (m).
    pub code_error_a: f64,
    /// Elevation-scaled pseudorange error term (m).
    pub code_error_b: f64,
    /// Zenith Doppler range-rate error (m/s), scaled by 1/sin(elevation).
    pub doppler_sigma: f64,
    /// Per-axis lower bound on the velocity standard deviation used for graph edges (m/s).
    pub velocity_sigma_floor: f64,
    pub max_iterations: usize,
    /// Position update below which the iteration stops (m).
    pub convergence_threshold: f64,
    pub max_condition_number: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            elevation_mask_deg: 15.0,
            code_error_a: 0.3,
            code_error_b: 0.3,
            doppler_sigma: 0.05,
            velocity_sigma_floor: 0.01,
            max_iterations: 10,
            convergence_threshold: 1e-4,
            max_condition_number: 1e12,
        }
    }
}

impl EstimationConfig {
    pub fn elevation_mask(&self) -> f64 {
        self.elevation_mask_deg.to_radians()
    }

    /// Pseudorange variance `a² + b²/sin²(el)` in m².
    pub fn pseudorange_variance(&self, elevation: f64) -> f64 {
        pseudorange_variance_with(self.code_error_a, self.code_error_b, elevation)
    }

    /// Doppler range-rate variance in (m/s)².
    pub fn doppler_variance(&self, elevation: f64) -> f64 {
        let s = self.doppler_sigma / elevation.sin();
        s * s
    }
}

/// Pseudorange variance with the default 0.3 m error terms. The signal
/// strength is accepted for interface stability but does not enter the model.
pub fn pseudorange_variance(elevation: f64, _snr: f64) -> f64 {
    let cfg = EstimationConfig::default();
    pseudorange_variance_with(cfg.code_error_a, cfg.code_error_b, elevation)
}

fn pseudorange_variance_with(a: f64, b: f64, elevation: f64) -> f64 {
    let s = elevation.sin();
    a * a + b * b / (s * s)
}

/// Condition number of a symmetric positive (semi)definite matrix.
pub(crate) fn condition_number(m: &nalgebra::DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
