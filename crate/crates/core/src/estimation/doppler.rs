use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{condition_number, EstimationConfig, EstimationError, SatelliteStates};
use crate::gnss::{ecef_to_geodetic, elevation_azimuth, line_of_sight, EcefVector, Epoch, GpsTime, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySolution {
    pub time: GpsTime,
    /// Receiver velocity in ECEF (m/s).
    pub velocity: EcefVector,
    /// Receiver clock drift expressed as a range rate (m/s).
    pub clock_drift: f64,
    /// Formal least-squares covariance of the velocity ((m/s)²).
    pub covariance: Matrix3<f64>,
    pub used_satellites: usize,
}

impl VelocitySolution {
    /// Covariance with every diagonal term raised to at least `floor_sigma²`.
    pub fn floored_covariance(&self, floor_sigma: f64) -> Matrix3<f64> {
        let mut c = self.covariance;
        for i in 0..3 {
            c[(i, i)] = c[(i, i)].max(floor_sigma * floor_sigma);
        }
        c
    }
}

/// Least-squares velocity from Doppler range rates.
///
/// Measured range rate is `-λ·doppler`; the model is
/// `(v_sat - v_rcv)·u + drift_rcv - c·drift_sat`, with the satellite
/// velocity rotated into the reception frame.
pub fn solve_doppler_velocity(
    epoch: &Epoch,
    sats: &SatelliteStates,
    position: &EcefVector,
    config: &EstimationConfig,
) -> Result<VelocitySolution, EstimationError> {
    let geodetic =
        ecef_to_geodetic(position).map_err(|_| EstimationError::SingularGeometry { condition: f64::INFINITY })?;
    let mask = config.elevation_mask();

    let mut h_rows: Vec<[f64; 4]> = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for obs in &epoch.observations {
        let Some(sat) = sats.get(&obs.sat) else {
            continue;
        };
        let Ok(los) = line_of_sight(position, sat) else {
            continue;
        };
        let (el, _) = elevation_azimuth(&geodetic, &los.satellite_at_reception_frame);
        if el < mask {
            continue;
        }
        let measured = -obs.wavelength * obs.doppler;
        let known = los.range_rate(&sat.velocity, &EcefVector::zeros()) - SPEED_OF_LIGHT * sat.clock_drift;
        h_rows.push([-los.unit.x, -los.unit.y, -los.unit.z, 1.0]);
        y.push(measured - known);
        w.push(1.0 / config.doppler_variance(el));
    }
    if h_rows.len() < 4 {
        return Err(EstimationError::InsufficientSatellites { available: h_rows.len(), required: 4 });
    }

    let n = h_rows.len();
    let h = DMatrix::from_fn(n, 4, |i, j| h_rows[i][j]);
    let ht_w = h.transpose() * DMatrix::from_diagonal(&DVector::from_vec(w));
    let normal = &ht_w * &h;
    let condition = condition_number(&normal);
    if !(condition <= config.max_condition_number) {
        return Err(EstimationError::SingularGeometry { condition });
    }
    let chol = normal.cholesky().ok_or(EstimationError::SingularGeometry { condition: f64::INFINITY })?;
    let x = chol.solve(&(&ht_w * DVector::from_vec(y)));
    let cov = chol.inverse();

    Ok(VelocitySolution {
        time: epoch.time,
        velocity: Vector3::new(x[0], x[1], x[2]),
        clock_drift: x[3],
        covariance: cov.fixed_view::<3, 3>(0, 0).into_owned(),
        used_satellites: n,
    })
}
