use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimulatorError;
use crate::atmosphere::{KlobucharParams, TropoModel};
use crate::gnss::{Constellation, GeodeticPosition, GpsTime, SatelliteId};

/// Everything needed to reproduce a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Seconds of data.
    pub duration: f64,
    /// Epochs per second.
    pub rate: f64,
    pub start_week: i32,
    pub start_tow: f64,
    pub origin: Origin,
    pub trajectory: TrajectorySpec,
    /// Vehicle speed (m/s).
    pub speed: f64,
    /// Duration of the velocity blend at each waypoint (s).
    pub blend_time: f64,
    pub noise: NoiseConfig,
    pub cycle_slips: Vec<CycleSlip>,
    pub receiver_clock: ReceiverClock,
    /// Per-system receiver offsets relative to GPS (m).
    pub system_biases: BTreeMap<Constellation, f64>,
    pub satellite_clock: SatelliteClockConfig,
    pub constellations: ConstellationCounts,
    pub iono: KlobucharParams,
    pub tropo: TropoModel,
    /// Satellites below this elevation are not tracked (deg).
    pub visibility_mask_deg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

impl Origin {
    pub fn geodetic(&self) -> GeodeticPosition {
        GeodeticPosition::from_degrees(self.lat_deg, self.lon_deg, self.height)
    }
}

/// Vehicle motion in the local east-north-up frame of the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    Static,
    /// Straight line at constant speed; heading clockwise from north.
    Line {
        heading_deg: f64,
    },
    /// Counter-clockwise circle starting eastward from the origin.
    Circle {
        radius: f64,
    },
    /// Constant-speed legs through ENU points (m), the first being the start.
    Waypoints {
        points: Vec<[f64; 3]>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Zenith standard deviations; every sigma is scaled by 1/sin(elevation).
    pub pseudorange_sigma: f64,
    pub phase_sigma: f64,
    pub doppler_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { pseudorange_sigma: 0.5, phase_sigma: 0.003, doppler_sigma: 0.05 }
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self { pseudorange_sigma: 0.0, phase_sigma: 0.0, doppler_sigma: 0.0 }
    }
}

/// Loss of lock on `sat` at `time` seconds after the scenario start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSlip {
    pub sat: SatelliteId,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReceiverClock {
    /// s
    pub bias0: f64,
    /// s/s
    pub drift: f64,
}

impl Default for ReceiverClock {
    fn default() -> Self {
        Self { bias0: 2.0e-4, drift: 1.0e-8 }
    }
}

/// Satellite clock offsets and drifts are drawn uniformly in `±max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SatelliteClockConfig {
    pub bias_max: f64,
    pub drift_max: f64,
}

impl Default for SatelliteClockConfig {
    fn default() -> Self {
        Self { bias_max: 1.0e-4, drift_max: 1.0e-13 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstellationCounts {
    pub gps: usize,
    pub glonass: usize,
    pub galileo: usize,
    pub beidou: usize,
}

impl Default for ConstellationCounts {
    fn default() -> Self {
        Self { gps: 31, glonass: 0, galileo: 24, beidou: 0 }
    }
}

impl ConstellationCounts {
    pub fn get(&self, c: Constellation) -> usize {
        match c {
            Constellation::Gps => self.gps,
            Constellation::Glonass => self.glonass,
            Constellation::Galileo => self.galileo,
            Constellation::BeiDou => self.beidou,
        }
    }
}

/// Published example broadcast coefficients, used as the default ionosphere.
pub fn default_klobuchar() -> KlobucharParams {
    KlobucharParams {
        alpha: [0.1118e-7, 0.7451e-8, -0.5961e-7, -0.1192e-6],
        beta: [0.1167e6, 0.1802e6, -0.1311e6, -0.4588e6],
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 200.0,
            rate: 1.0,
            start_week: 2100,
            start_tow: 345_600.0,
            origin: Origin { lat_deg: 35.68, lon_deg: 140.02, height: 40.0 },
            trajectory: TrajectorySpec::Waypoints {
                points: vec![
                    [0.0, 0.0, 0.0],
                    [55.0, 10.0, 8.0],
                    [70.0, 50.0, 12.0],
                    [20.0, 60.0, 10.0],
                    [0.0, 16.0, 4.0],
                ],
            },
            speed: 1.0,
            blend_time: 2.0,
            noise: NoiseConfig::default(),
            cycle_slips: Vec::new(),
            receiver_clock: ReceiverClock::default(),
            system_biases: BTreeMap::from([(Constellation::Galileo, 4.2)]),
            satellite_clock: SatelliteClockConfig::default(),
            constellations: ConstellationCounts::default(),
            iono: default_klobuchar(),
            tropo: TropoModel::default(),
            visibility_mask_deg: 5.0,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn start_time(&self) -> GpsTime {
        GpsTime::new(self.start_week, self.start_tow)
    }

    pub fn epoch_count(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    /// Reception time of epoch `k`.
    pub fn epoch_time(&self, k: usize) -> GpsTime {
        self.start_time().add_seconds(k as f64 / self.rate)
    }

    pub fn system_bias(&self, c: Constellation) -> f64 {
        if c == Constellation::Gps {
            0.0
        } else {
            self.system_biases.get(&c).copied().unwrap_or(0.0)
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: String| Err(SimulatorError::InvalidConfig(m));
        if !(self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.rate > 0.0) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.speed >= 0.0) {
            return bad(format!("speed must be non-negative, got {}", self.speed));
        }
        let n = &self.noise;
        if !(n.pseudorange_sigma >= 0.0 && n.phase_sigma >= 0.0 && n.doppler_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        if self.constellations.gps == 0 {
            return bad("at least one GPS satellite is required".into());
        }
        self.tropo.validate().map_err(|e| SimulatorError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ScenarioConfig {
            cycle_slips: vec![CycleSlip { sat: SatelliteId::gps(7), time: 50.0 }],
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: ScenarioConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: ScenarioConfig =
            toml::from_str("duration = 30.0\nseed = 5\n[trajectory]\nkind = \"line\"\nheading_deg = 90.0\n").unwrap();
        assert_eq!(cfg.duration, 30.0);
        assert_eq!(cfg.trajectory, TrajectorySpec::Line { heading_deg: 90.0 });
        assert_eq!(cfg.constellations.gps, 31);
        assert_eq!(cfg.epoch_count(), 30);
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(ScenarioConfig::default().validate().is_ok());
        assert!(ScenarioConfig { rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { duration: -1.0, ..Default::default() }.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.noise.phase_sigma = -1.0;
        assert!(c.validate().is_err());
    }
}
