use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};

use super::{EcefVector, GeodeticPosition, GnssError, SatelliteState, EARTH_ROTATION_RATE, SPEED_OF_LIGHT};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

const MIN_GEODETIC_NORM: f64 = 1.0e6;
const MIN_SATELLITE_DISTANCE: f64 = 1.0e6;

pub fn geodetic_to_ecef(pos: &GeodeticPosition) -> EcefVector {
    let (sin_lat, cos_lat) = pos.latitude.sin_cos();
    let (sin_lon, cos_lon) = pos.longitude.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + pos.height) * cos_lat * cos_lon,
        (n + pos.height) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + pos.height) * sin_lat,
    )
}

/// Inverse of [`geodetic_to_ecef`] by fixed-point iteration on the
/// z-coordinate of the ellipsoid normal intersection. Converges to well below
/// a micrometer in at most ten iterations for any terrestrial or orbital point.
pub fn ecef_to_geodetic(pos: &EcefVector) -> Result<GeodeticPosition, GnssError> {
    let norm = pos.norm();
    if !(norm > MIN_GEODETIC_NORM) {
        return Err(GnssError::NearSingular { norm });
    }
    let r2 = pos.x * pos.x + pos.y * pos.y;
    let mut z = pos.z;
    let mut v = WGS84_A;
    for _ in 0..10 {
        let sin_lat = z / (r2 + z * z).sqrt();
        v = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        let next = pos.z + v * WGS84_E2 * sin_lat;
        let done = (next - z).abs() < 1e-12 * norm;
        z = next;
        if done {
            break;
        }
    }
    let (latitude, longitude) = if r2 > 1e-12 {
        ((z / r2.sqrt()).atan(), pos.y.atan2(pos.x))
    } else if pos.z > 0.0 {
        (FRAC_PI_2, 0.0)
    } else {
        (-FRAC_PI_2, 0.0)
    };
    let height = (r2 + z * z).sqrt() - v;
    Ok(GeodeticPosition { latitude, longitude, height })
}

/// Rotation taking ECEF difference vectors into the local east-north-up frame.
pub fn enu_rotation(origin: &GeodeticPosition) -> Matrix3<f64> {
    let (sin_lat, cos_lat) = origin.latitude.sin_cos();
    let (sin_lon, cos_lon) = origin.longitude.sin_cos();
    Matrix3::new(
        -sin_lon,
        cos_lon,
        0.0,
        -sin_lat * cos_lon,
        -sin_lat * sin_lon,
        cos_lat,
        cos_lat * cos_lon,
        cos_lat * sin_lon,
        sin_lat,
    )
}

/// East-north-up coordinates of `point` relative to `origin`.
pub fn ecef_to_enu(origin: &GeodeticPosition, point: &EcefVector) -> Vector3<f64> {
    enu_rotation(origin) * (point - geodetic_to_ecef(origin))
}

pub fn enu_to_ecef(origin: &GeodeticPosition, enu: &Vector3<f64>) -> EcefVector {
    geodetic_to_ecef(origin) + enu_rotation(origin).transpose() * enu
}

/// Unit vector and range from a receiver to a satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineOfSight {
    /// Receiver-to-satellite unit vector.
    pub unit: EcefVector,
    /// Geometric range including the Earth-rotation correction (m).
    pub range: f64,
    /// Satellite position rotated into the ECEF frame at reception time.
    pub satellite_at_reception_frame: EcefVector,
}

impl LineOfSight {
    /// Rotates a transmission-frame vector into the reception frame.
    pub fn to_reception_frame(&self, v: &EcefVector) -> EcefVector {
        let (s, c) = (EARTH_ROTATION_RATE * self.range / SPEED_OF_LIGHT).sin_cos();
        Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }

    /// Rate of change of the range for a satellite velocity given in the
    /// transmission frame and a receiver velocity.
    pub fn range_rate(&self, sat_velocity: &EcefVector, receiver_velocity: &EcefVector) -> f64 {
        self.unit.dot(&(self.to_reception_frame(sat_velocity) - receiver_velocity))
    }
}

/// Line of sight from `receiver` to a satellite whose state is expressed in
/// the ECEF frame of its transmission time. The satellite position is rotated
/// by the Earth's rotation during the signal flight time (Sagnac effect),
/// solving the flight time by fixed-point iteration.
pub fn line_of_sight(receiver: &EcefVector, sat: &SatelliteState) -> Result<LineOfSight, GnssError> {
    let distance = (sat.position - receiver).norm();
    if !(distance >= MIN_SATELLITE_DISTANCE) {
        return Err(GnssError::DegenerateGeometry { distance });
    }
    let mut range = distance;
    let mut rotated = sat.position;
    for _ in 0..5 {
        let theta = EARTH_ROTATION_RATE * range / SPEED_OF_LIGHT;
        let (s, c) = theta.sin_cos();
        rotated = Vector3::new(
            c * sat.position.x + s * sat.position.y,
            -s * sat.position.x + c * sat.position.y,
            sat.position.z,
        );
        let next = (rotated - receiver).norm();
        let done = (next - range).abs() < 1e-9;
        range = next;
        if done {
            break;
        }
    }
    Ok(LineOfSight { unit: (rotated - receiver) / range, range, satellite_at_reception_frame: rotated })
}

/// Elevation in `[-π/2, π/2]` and azimuth in `[0, 2π)` of `target` seen from `receiver`.
pub fn elevation_azimuth(receiver: &GeodeticPosition, target: &EcefVector) -> (f64, f64) {
    let enu = ecef_to_enu(receiver, target);
    let elevation = enu.z.atan2(enu.x.hypot(enu.y));
    let mut azimuth = enu.x.atan2(enu.y);
    if azimuth < 0.0 {
        azimuth += 2.0 * PI;
    }
    if azimuth >= 2.0 * PI {
        azimuth = 0.0;
    }
    (elevation, azimuth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sat_at(p: EcefVector) -> SatelliteState {
        SatelliteState { position: p, velocity: Vector3::zeros(), clock_bias: 0.0, clock_drift: 0.0 }
    }

    #[test]
    fn equator_and_pole() {
        let e = geodetic_to_ecef(&GeodeticPosition::new(0.0, 0.0, 0.0));
        assert_eq!(e, Vector3::new(WGS84_A, 0.0, 0.0));
        let p = geodetic_to_ecef(&GeodeticPosition::new(FRAC_PI_2, 0.0, 0.0));
        assert!(p.x.abs() < 1e-9 && p.y.abs() < 1e-9);
        assert!((p.z - 6_356_752.314_245).abs() < 1e-6);

        let g = ecef_to_geodetic(&Vector3::new(WGS84_A, 0.0, 0.0)).unwrap();
        assert!(g.latitude.abs() < 1e-15 && g.longitude.abs() < 1e-15 && g.height.abs() < 1e-9);
        let g = ecef_to_geodetic(&Vector3::new(0.0, 0.0, 6_356_752.314)).unwrap();
        assert!((g.latitude - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(g.longitude, 0.0);
        assert!(g.height.abs() < 1e-3);
    }

    #[test]
    fn mid_latitude_matches_hand_evaluation() {
        // N = a / sqrt(1 - e² sin²φ) evaluated independently for φ = 35°, λ = 140°, h = 35 m.
        let lat = 35.0f64.to_radians();
        let lon = 140.0f64.to_radians();
        let f = 1.0 / 298.257223563;
        let e2 = 2.0 * f - f * f;
        let n = 6378137.0 / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        let expect = Vector3::new(
            (n + 35.0) * lat.cos() * lon.cos(),
            (n + 35.0) * lat.cos() * lon.sin(),
            (n * (1.0 - e2) + 35.0) * lat.sin(),
        );
        let got = geodetic_to_ecef(&GeodeticPosition::new(lat, lon, 35.0));
        assert!((got - expect).norm() < 1e-6);
        // Frozen value of the same evaluation.
        assert!((got.x - -4_006_761.379).abs() < 1e-3);
        assert!((got.y - 3_362_071.995).abs() < 1e-3);
        assert!((got.z - 3_637_886.985).abs() < 1e-3);
    }

    #[test]
    fn rejects_center_of_earth() {
        assert!(matches!(ecef_to_geodetic(&Vector3::new(10.0, 0.0, 0.0)), Err(GnssError::NearSingular { .. })));
    }

    #[test]
    fn round_trip_over_globe() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cases: Vec<GeodeticPosition> = (0..1000)
            .map(|_| {
                GeodeticPosition::new(
                    rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
                    rng.random_range(-PI..PI),
                    rng.random_range(-500.0..30_000.0),
                )
            })
            .collect();
        cases.push(GeodeticPosition::new(FRAC_PI_2 - 1e-12, 1.0, 100.0));
        cases.push(GeodeticPosition::new(-FRAC_PI_2 + 1e-12, -2.0, 10.0));
        cases.push(GeodeticPosition::new(0.3, PI, 0.0));
        for p in cases {
            let x = geodetic_to_ecef(&p);
            let q = ecef_to_geodetic(&x).unwrap();
            assert!((geodetic_to_ecef(&q) - x).norm() < 1e-6);
            assert!((q.latitude - p.latitude).abs() < 1e-9);
            assert!((q.height - p.height).abs() < 1e-6);
            // Longitude is ambiguous at ±π and meaningless at the poles.
            if p.latitude.abs() < FRAC_PI_2 - 1e-6 {
                let dl = (q.longitude - p.longitude).rem_euclid(2.0 * PI);
                assert!(dl.min(2.0 * PI - dl) < 1e-9);
            }
        }
    }

    #[test]
    fn enu_identity_and_up_axis() {
        let origin = GeodeticPosition::from_degrees(35.7, 139.8, 40.0);
        let x0 = geodetic_to_ecef(&origin);
        assert!(ecef_to_enu(&origin, &x0).norm() < 1e-9);
        let up = GeodeticPosition { height: origin.height + 100.0, ..origin };
        let enu = ecef_to_enu(&origin, &geodetic_to_ecef(&up));
        assert!((enu - Vector3::new(0.0, 0.0, 100.0)).norm() < 1e-6);
    }

    #[test]
    fn enu_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let origin = GeodeticPosition::from_degrees(-33.0, 151.0, 10.0);
        for _ in 0..100 {
            let p = Vector3::new(rng.random_range(-7e6..7e6), rng.random_range(-7e6..7e6), rng.random_range(-7e6..7e6));
            let q = Vector3::new(rng.random_range(-7e6..7e6), rng.random_range(-7e6..7e6), rng.random_range(-7e6..7e6));
            let d = (ecef_to_enu(&origin, &p) - ecef_to_enu(&origin, &q)).norm();
            assert!((d - (p - q).norm()).abs() <= 1e-9 * (p - q).norm());
            let back = enu_to_ecef(&origin, &ecef_to_enu(&origin, &p));
            assert!((back - p).norm() < 1e-6);
        }
    }

    #[test]
    fn collinear_line_of_sight() {
        let rcv = Vector3::new(WGS84_A, 0.0, 0.0);
        let los = line_of_sight(&rcv, &sat_at(Vector3::new(WGS84_A + 2.0e7, 0.0, 0.0))).unwrap();
        // Earth rotation during the ~67 ms flight shifts the satellite by ~128 m
        // across track; the range changes only to second order.
        assert!((los.unit - Vector3::x()).norm() < 1e-5);
        assert!((los.range - 2.0e7).abs() < 1e-2);
        assert!((los.satellite_at_reception_frame.y + 128.2).abs() < 0.5);
        assert!(matches!(
            line_of_sight(&rcv, &sat_at(rcv + Vector3::new(10.0, 0.0, 0.0))),
            Err(GnssError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn unit_vector_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let rcv = Vector3::new(
                rng.random_range(-6.4e6..6.4e6),
                rng.random_range(-6.4e6..6.4e6),
                rng.random_range(-6.4e6..6.4e6),
            );
            let sat = Vector3::new(
                rng.random_range(-2.7e7..2.7e7),
                rng.random_range(-2.7e7..2.7e7),
                rng.random_range(-2.7e7..2.7e7),
            );
            if (sat - rcv).norm() < 1e6 {
                continue;
            }
            let los = line_of_sight(&rcv, &sat_at(sat)).unwrap();
            assert!((los.unit.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sagnac_correction_matches_two_step_fixed_point() {
        let rcv = Vector3::new(WGS84_A, 0.0, 0.0);
        let sat = Vector3::new(WGS84_A + 1.2e7, 1.6e7, 0.0);
        let los = line_of_sight(&rcv, &sat_at(sat)).unwrap();

        // Independent oracle: two fixed-point steps on the flight time, rotating
        // by angle ω·τ about the z axis.
        let mut tau = (sat - rcv).norm() / SPEED_OF_LIGHT;
        let mut range = 0.0;
        for _ in 0..2 {
            let th = EARTH_ROTATION_RATE * tau;
            let rot = Vector3::new(sat.x * th.cos() + sat.y * th.sin(), -sat.x * th.sin() + sat.y * th.cos(), sat.z);
            range = (rot - rcv).norm();
            tau = range / SPEED_OF_LIGHT;
        }
        let correction = los.range - (sat - rcv).norm();
        let oracle = range - (sat - rcv).norm();
        assert!((correction - oracle).abs() < 1e-4);
        // First-order closed form ω/c·(x_s·y_r − y_s·x_r).
        let first_order = EARTH_ROTATION_RATE / SPEED_OF_LIGHT * (sat.x * rcv.y - sat.y * rcv.x);
        assert!((correction - first_order).abs() < 1e-3, "{correction} vs {first_order}");
        assert!(correction.abs() > 1.0);
    }

    #[test]
    fn elevation_cases() {
        let site = GeodeticPosition::from_degrees(35.0, 140.0, 0.0);
        let overhead = enu_to_ecef(&site, &Vector3::new(0.0, 0.0, 2.0e7));
        let (el, _) = elevation_azimuth(&site, &overhead);
        assert!((el - FRAC_PI_2).abs() < 1e-9);
        let horizon = enu_to_ecef(&site, &Vector3::new(1.0e7, 3.0e6, 0.0));
        let (el, az) = elevation_azimuth(&site, &horizon);
        assert!(el.abs() < 1e-9);
        assert!((az - 1.0e7f64.atan2(3.0e6)).abs() < 1e-9);
    }

    #[test]
    fn elevation_matches_enu_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let site = GeodeticPosition::new(
                rng.random_range(-1.4..1.4),
                rng.random_range(-3.1..3.1),
                rng.random_range(0.0..3000.0),
            );
            let target = Vector3::new(
                rng.random_range(-2.6e7..2.6e7),
                rng.random_range(-2.6e7..2.6e7),
                rng.random_range(-2.6e7..2.6e7),
            );
            let (el, az) = elevation_azimuth(&site, &target);
            let enu = ecef_to_enu(&site, &target);
            let r = enu.norm();
            assert!((el - (enu.z / r).asin()).abs() < 1e-9);
            assert!((0.0..2.0 * PI).contains(&az));
            assert!((az.sin() - enu.x / enu.x.hypot(enu.y)).abs() < 1e-9);
        }
    }
}
