//! GNSS domain types shared by every other module: time, satellite identity,
//! raw observations and Earth-frame geometry.

mod geodesy;
mod time;

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geodesy::{
    ecef_to_enu, ecef_to_geodetic, elevation_azimuth, enu_rotation, enu_to_ecef, geodetic_to_ecef, line_of_sight,
    LineOfSight, WGS84_A, WGS84_B, WGS84_F,
};
pub use time::{GpsTime, SECONDS_PER_WEEK};

/// Cartesian Earth-centered Earth-fixed vector in meters (or m/s for velocities).
pub type EcefVector = Vector3<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// WGS-84 Earth rotation rate (rad/s).
pub const EARTH_ROTATION_RATE: f64 = 7.292_115_146_7e-5;
/// GPS L1 / Galileo E1 carrier frequency (Hz).
pub const FREQ_L1: f64 = 1_575.42e6;
/// BeiDou B1I carrier frequency (Hz).
pub const FREQ_B1I: f64 = 1_561.098e6;
/// GLONASS G1 base frequency and channel spacing (Hz).
pub const FREQ_G1_BASE: f64 = 1_602.0e6;
pub const FREQ_G1_STEP: f64 = 0.5625e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnssError {
    #[error("position too close to the Earth's center ({norm:.1} m) for a geodetic conversion")]
    NearSingular { norm: f64 },
    #[error("receiver-satellite distance {distance:.1} m is too small")]
    DegenerateGeometry { distance: f64 },
    #[error("invalid satellite id `{0}`")]
    InvalidSatelliteId(String),
    #[error("duplicate observation of {0} in one epoch")]
    DuplicateSatellite(SatelliteId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "GLO")]
    Glonass,
    #[serde(rename = "GAL")]
    Galileo,
    #[serde(rename = "BDS")]
    BeiDou,
}

impl Constellation {
    pub const ALL: [Constellation; 4] =
        [Constellation::Gps, Constellation::Glonass, Constellation::Galileo, Constellation::BeiDou];

    /// Position of this system's clock term in a node state (after the three position terms).
    pub fn index(self) -> usize {
        match self {
            Constellation::Gps => 0,
            Constellation::Glonass => 1,
            Constellation::Galileo => 2,
            Constellation::BeiDou => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// RINEX 3 system letter.
    pub fn letter(self) -> char {
        match self {
            Constellation::Gps => 'G',
            Constellation::Glonass => 'R',
            Constellation::Galileo => 'E',
            Constellation::BeiDou => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'G' => Some(Constellation::Gps),
            'R' => Some(Constellation::Glonass),
            'E' => Some(Constellation::Galileo),
            'C' => Some(Constellation::BeiDou),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constellation::Gps => "GPS",
            Constellation::Glonass => "GLO",
            Constellation::Galileo => "GAL",
            Constellation::BeiDou => "BDS",
        }
    }

    /// Carrier wavelength of the single band this crate processes. GLONASS
    /// needs the FDMA channel number.
    pub fn wavelength(self, glonass_channel: Option<i8>) -> Option<f64> {
        let freq = match self {
            Constellation::Gps | Constellation::Galileo => FREQ_L1,
            Constellation::BeiDou => FREQ_B1I,
            Constellation::Glonass => FREQ_G1_BASE + FREQ_G1_STEP * f64::from(glonass_channel?),
        };
        Some(SPEED_OF_LIGHT / freq)
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatelliteId {
    pub constellation: Constellation,
    pub prn: u8,
}

impl SatelliteId {
    pub fn new(constellation: Constellation, prn: u8) -> Self {
        Self { constellation, prn }
    }

    pub fn gps(prn: u8) -> Self {
        Self::new(Constellation::Gps, prn)
    }

    pub fn galileo(prn: u8) -> Self {
        Self::new(Constellation::Galileo, prn)
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}", self.constellation.letter(), self.prn)
    }
}

impl FromStr for SatelliteId {
    type Err = GnssError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || GnssError::InvalidSatelliteId(s.to_string());
        let mut chars = s.chars();
        let constellation = chars.next().and_then(Constellation::from_letter).ok_or_else(err)?;
        let prn: u8 = chars.as_str().trim().parse().map_err(|_| err())?;
        if !(1..=64).contains(&prn) {
            return Err(err());
        }
        Ok(Self { constellation, prn })
    }
}

impl Serialize for SatelliteId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SatelliteId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Geodetic coordinates on the WGS-84 ellipsoid (radians, meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub height: f64,
}

impl GeodeticPosition {
    pub fn new(latitude: f64, longitude: f64, height: f64) -> Self {
        Self { latitude, longitude, height }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), height)
    }
}

/// Satellite position, velocity and clock at signal transmission time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub position: EcefVector,
    pub velocity: EcefVector,
    /// Satellite clock offset (s).
    pub clock_bias: f64,
    /// Satellite clock drift (s/s).
    pub clock_drift: f64,
}

/// One satellite's raw measurements in one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub sat: SatelliteId,
    /// Code pseudorange (m).
    pub pseudorange: f64,
    /// Accumulated carrier phase (cycles).
    pub carrier_phase: f64,
    /// Doppler shift (Hz); positive when the satellite approaches.
    pub doppler: f64,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// Consecutive epochs of continuous carrier lock; zero at (re)acquisition.
    pub lock_count: u32,
    /// Loss-of-lock indicator set on this epoch.
    pub loss_of_lock: bool,
    /// Carrier-to-noise density (dB-Hz).
    pub snr: f64,
}

/// One receiver time tick with its observations, sorted by satellite id.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub time: GpsTime,
    pub observations: Vec<Observation>,
}

impl Epoch {
    /// Sorts observations by satellite and rejects duplicates.
    pub fn new(time: GpsTime, mut observations: Vec<Observation>) -> Result<Self, GnssError> {
        observations.sort_by_key(|o| o.sat);
        if let Some(w) = observations.windows(2).find(|w| w[0].sat == w[1].sat) {
            return Err(GnssError::DuplicateSatellite(w[0].sat));
        }
        Ok(Self { time, observations })
    }

    pub fn get(&self, sat: SatelliteId) -> Option<&Observation> {
        self.observations.binary_search_by_key(&sat, |o| o.sat).ok().map(|i| &self.observations[i])
    }

    pub fn satellites(&self) -> impl Iterator<Item = SatelliteId> + '_ {
        self.observations.iter().map(|o| o.sat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(sat: SatelliteId) -> Observation {
        Observation {
            sat,
            pseudorange: 2.2e7,
            carrier_phase: 1.1e8,
            doppler: 0.0,
            wavelength: 0.19,
            lock_count: 0,
            loss_of_lock: false,
            snr: 45.0,
        }
    }

    #[test]
    fn epoch_sorts_and_rejects_duplicates() {
        let t = GpsTime::new(2100, 0.0);
        let e = Epoch::new(t, vec![obs(SatelliteId::galileo(3)), obs(SatelliteId::gps(12)), obs(SatelliteId::gps(2))])
            .unwrap();
        let ids: Vec<_> = e.satellites().map(|s| s.to_string()).collect();
        assert_eq!(ids, ["G02", "G12", "E03"]);
        assert!(e.get(SatelliteId::gps(12)).is_some());
        assert!(e.get(SatelliteId::gps(13)).is_none());

        let dup = Epoch::new(t, vec![obs(SatelliteId::gps(2)), obs(SatelliteId::gps(2))]);
        assert!(matches!(dup, Err(GnssError::DuplicateSatellite(_))));
    }

    #[test]
    fn satellite_id_parses_rinex_style() {
        assert_eq!("G07".parse::<SatelliteId>().unwrap(), SatelliteId::gps(7));
        assert_eq!("E 5".parse::<SatelliteId>().unwrap(), SatelliteId::galileo(5));
        assert!("X01".parse::<SatelliteId>().is_err());
        assert!("G00".parse::<SatelliteId>().is_err());
        assert!("G".parse::<SatelliteId>().is_err());
    }

    #[test]
    fn wavelengths_are_in_l1_band() {
        let l1 = Constellation::Gps.wavelength(None).unwrap();
        assert!((l1 - 0.190_293_672_798).abs() < 1e-9);
        for k in -7..=6 {
            let w = Constellation::Glonass.wavelength(Some(k)).unwrap();
            assert!((0.18..=0.26).contains(&w));
        }
        assert!(Constellation::Glonass.wavelength(None).is_none());
    }
}
