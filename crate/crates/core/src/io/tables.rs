//! CSV files: satellite states alongside an observation file, and
//! trajectories.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::estimation::SatelliteStates;
use crate::gnss::{ecef_to_geodetic, EcefVector, Epoch, GeodeticPosition, GpsTime, SatelliteId, SatelliteState};

/// Matching tolerance between observation and satellite-state epochs (s).
const TIME_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
struct SatelliteRow {
    week: i32,
    tow: f64,
    sat: SatelliteId,
    x: f64,
    y: f64,
    z: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    clock_bias: f64,
    clock_drift: f64,
    glonass_channel: Option<i8>,
}

/// Precomputed satellite states, one group per epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SatelliteSidecar {
    pub epochs: Vec<(GpsTime, SatelliteStates)>,
    pub glonass_channels: BTreeMap<u8, i8>,
}

impl SatelliteSidecar {
    /// States for every observation epoch, matched by time.
    pub fn align(&self, epochs: &[Epoch]) -> Result<Vec<SatelliteStates>, IoError> {
        let mut out = Vec::with_capacity(epochs.len());
        let mut k = 0;
        for e in epochs {
            while k < self.epochs.len() && self.epochs[k].0.diff(&e.time) < -TIME_TOLERANCE {
                k += 1;
            }
            match self.epochs.get(k) {
                Some((t, states)) if t.diff(&e.time).abs() <= TIME_TOLERANCE => out.push(states.clone()),
                _ => return Err(IoError::MissingSatelliteStates { time: e.time }),
            }
        }
        Ok(out)
    }
}

/// Full precision: values round-trip exactly.
pub fn write_satellite_states(
    times: &[GpsTime],
    states: &[SatelliteStates],
    glonass_channels: &BTreeMap<u8, i8>,
    out: impl Write,
) -> Result<(), IoError> {
    if times.len() != states.len() {
        return Err(IoError::LengthMismatch { expected: times.len(), found: states.len() });
    }
    let mut w = csv::Writer::from_writer(out);
    for (t, group) in times.iter().zip(states) {
        for (sat, s) in group {
            w.serialize(SatelliteRow {
                week: t.week,
                tow: t.tow,
                sat: *sat,
                x: s.position.x,
                y: s.position.y,
                z: s.position.z,
                vx: s.velocity.x,
                vy: s.velocity.y,
                vz: s.velocity.z,
                clock_bias: s.clock_bias,
                clock_drift: s.clock_drift,
                glonass_channel: glonass_channels.get(&sat.prn).copied().filter(|_| sat.constellation.letter() == 'R'),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows must be grouped by epoch in time order.
pub fn read_satellite_states(input: impl Read) -> Result<SatelliteSidecar, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut sidecar = SatelliteSidecar::default();
    for row in r.deserialize() {
        let row: SatelliteRow = row?;
        let time = GpsTime::new(row.week, row.tow);
        let state = SatelliteState {
            position: EcefVector::new(row.x, row.y, row.z),
            velocity: EcefVector::new(row.vx, row.vy, row.vz),
            clock_bias: row.clock_bias,
            clock_drift: row.clock_drift,
        };
        if let Some(ch) = row.glonass_channel {
            sidecar.glonass_channels.insert(row.sat.prn, ch);
        }
        match sidecar.epochs.last_mut() {
            Some((t, group)) if t.diff(&time).abs() <= TIME_TOLERANCE => {
                group.insert(row.sat, state);
            }
            Some((t, _)) if time.diff(t) < 0.0 => {
                return Err(IoError::InvalidValue(format!("satellite states out of time order at {time}")));
            }
            _ => sidecar.epochs.push((time, BTreeMap::from([(row.sat, state)]))),
        }
    }
    Ok(sidecar)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryStatus {
    Initial,
    Optimized,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub time: GpsTime,
    pub position: EcefVector,
    pub geodetic: GeodeticPosition,
    pub status: TrajectoryStatus,
}

impl TrajectoryRecord {
    pub fn new(time: GpsTime, position: EcefVector, status: TrajectoryStatus) -> Result<Self, IoError> {
        let geodetic = ecef_to_geodetic(&position).map_err(|e| IoError::InvalidValue(e.to_string()))?;
        Ok(Self { time, position, geodetic, status })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    tow: f64,
    x: f64,
    y: f64,
    z: f64,
    lat_deg: f64,
    lon_deg: f64,
    height: f64,
    status: TrajectoryStatus,
}

/// Columns `tow, x, y, z, lat_deg, lon_deg, height, status`; positions to
/// 0.1 mm.
pub fn write_trajectory_csv(records: &[TrajectoryRecord], out: impl Write) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tow", "x", "y", "z", "lat_deg", "lon_deg", "height", "status"])?;
    for r in records {
        let status = match r.status {
            TrajectoryStatus::Initial => "initial",
            TrajectoryStatus::Optimized => "optimized",
            TrajectoryStatus::Truth => "truth",
        };
        w.write_record([
            format!("{:.3}", r.time.tow),
            format!("{:.4}", r.position.x),
            format!("{:.4}", r.position.y),
            format!("{:.4}", r.position.z),
            format!("{:.10}", r.geodetic.latitude.to_degrees()),
            format!("{:.10}", r.geodetic.longitude.to_degrees()),
            format!("{:.4}", r.geodetic.height),
            status.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The file stores time of week only; records come back in week 0.
pub fn read_trajectory_csv(input: impl Read) -> Result<Vec<TrajectoryRecord>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: TrajectoryRow = row?;
        let position = EcefVector::new(row.x, row.y, row.z);
        if !(position.iter().all(|v| v.is_finite()) && row.tow.is_finite()) {
            return Err(IoError::InvalidValue(format!("non-finite trajectory row at tow {}", row.tow)));
        }
        out.push(TrajectoryRecord {
            time: GpsTime::new(0, row.tow),
            position,
            geodetic: GeodeticPosition::from_degrees(row.lat_deg, row.lon_deg, row.height),
            status: row.status,
        });
    }
    Ok(out)
}
