use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{ConstellationCounts, SatelliteClockConfig};
use crate::gnss::{Constellation, GpsTime, SatelliteId, SatelliteState, EARTH_ROTATION_RATE};

/// Earth gravitational parameter (m³/s²).
pub const GM_EARTH: f64 = 3.986_004_418e14;

/// Circular Keplerian orbit plus a linear clock model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitElements {
    pub sat: SatelliteId,
    pub semi_major_axis: f64,
    pub inclination: f64,
    /// Right ascension of the ascending node at `reference` (rad).
    pub raan: f64,
    /// Argument of latitude at `reference` (rad).
    pub arg_latitude: f64,
    pub reference: GpsTime,
    pub clock_bias: f64,
    pub clock_drift: f64,
    pub glonass_channel: Option<i8>,
}

impl OrbitElements {
    pub fn mean_motion(&self) -> f64 {
        (GM_EARTH / self.semi_major_axis.powi(3)).sqrt()
    }

    pub fn wavelength(&self) -> f64 {
        self.sat
            .constellation
            .wavelength(self.glonass_channel)
            .expect("simulated GLONASS satellites always carry a channel")
    }
}

struct Shell {
    semi_major_axis: f64,
    inclination_deg: f64,
    planes: usize,
}

fn shell(c: Constellation) -> Shell {
    match c {
        Constellation::Gps => Shell { semi_major_axis: 26_560e3, inclination_deg: 55.0, planes: 6 },
        Constellation::Galileo => Shell { semi_major_axis: 29_600e3, inclination_deg: 56.0, planes: 3 },
        Constellation::Glonass => Shell { semi_major_axis: 25_510e3, inclination_deg: 64.8, planes: 3 },
        Constellation::BeiDou => Shell { semi_major_axis: 27_906e3, inclination_deg: 55.0, planes: 3 },
    }
}

/// Nominal Walker-like constellations with a seeded node offset and small
/// in-plane phase jitter. Deterministic in `seed`.
pub fn generate_constellation(
    seed: u64,
    counts: &ConstellationCounts,
    clocks: &SatelliteClockConfig,
    reference: GpsTime,
) -> BTreeMap<SatelliteId, OrbitElements> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for system in Constellation::ALL {
        let count = counts.get(system);
        if count == 0 {
            continue;
        }
        let sh = shell(system);
        let planes = sh.planes.min(count);
        let raan0 = rng.random_range(0.0..2.0 * PI);
        for i in 0..count {
            let plane = i % planes;
            let slot = i / planes;
            let in_plane = count / planes + usize::from(plane < count % planes);
            let raan = raan0 + 2.0 * PI * plane as f64 / planes as f64;
            let phase = 2.0 * PI * slot as f64 / in_plane as f64
                + 2.0 * PI * plane as f64 / count as f64
                + rng.random_range(-0.05..0.05);
            let glonass_channel = (system == Constellation::Glonass).then(|| (i as i8 % 14) - 7);
            let elements = OrbitElements {
                sat: SatelliteId::new(system, (i + 1) as u8),
                semi_major_axis: sh.semi_major_axis,
                inclination: sh.inclination_deg.to_radians(),
                raan,
                arg_latitude: phase,
                reference,
                clock_bias: clocks.bias_max * rng.random_range(-1.0..=1.0),
                clock_drift: clocks.drift_max * rng.random_range(-1.0..=1.0),
                glonass_channel,
            };
            out.insert(elements.sat, elements);
        }
    }
    out
}

/// Satellite state at `time` in the ECEF frame of that same instant.
pub fn propagate_satellite(el: &OrbitElements, time: GpsTime) -> SatelliteState {
    let dt = time.diff(&el.reference);
    let a = el.semi_major_axis;
    let n = el.mean_motion();
    let u = el.arg_latitude + n * dt;
    let (su, cu) = u.sin_cos();
    let (si, ci) = el.inclination.sin_cos();
    let (so, co) = el.raan.sin_cos();

    let r_inertial = a * Vector3::new(cu * co - su * ci * so, cu * so + su * ci * co, su * si);
    let v_inertial = a * n * Vector3::new(-su * co - cu * ci * so, -su * so + cu * ci * co, cu * si);

    let (st, ct) = (EARTH_ROTATION_RATE * dt).sin_cos();
    let rotate = |v: &Vector3<f64>| Vector3::new(ct * v.x + st * v.y, -st * v.x + ct * v.y, v.z);
    let position = rotate(&r_inertial);
    let velocity =
        rotate(&v_inertial) + Vector3::new(EARTH_ROTATION_RATE * position.y, -EARTH_ROTATION_RATE * position.x, 0.0);

    SatelliteState { position, velocity, clock_bias: el.clock_bias + el.clock_drift * dt, clock_drift: el.clock_drift }
}
