use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};

use super::{condition_number, EstimationConfig, EstimationError, SatelliteStates};
use crate::atmosphere::{klobuchar_delay, saastamoinen_delay, KlobucharParams, TropoModel};
use crate::gnss::{
    ecef_to_geodetic, elevation_azimuth, line_of_sight, Constellation, EcefVector, Epoch, GpsTime, SatelliteId,
    SPEED_OF_LIGHT,
};

/// Positions closer than this to the Earth's center are treated as "not yet
/// initialized": no elevation mask and no atmosphere corrections.
const SURFACE_RADIUS: f64 = 6.0e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SppSolution {
    pub time: GpsTime,
    pub position: EcefVector,
    /// GPS entry is the receiver clock offset; other systems carry their
    /// offset relative to GPS. All in meters.
    pub clock_biases: BTreeMap<Constellation, f64>,
    /// Covariance over `[x, y, z, GPS, GLO, GAL, BDS]`; rows of unobserved
    /// systems are zero.
    pub covariance: SMatrix<f64, 7, 7>,
    pub used_satellites: BTreeMap<Constellation, usize>,
    /// Post-fit residuals (m) and their weights.
    pub residuals: Vec<(SatelliteId, f64, f64)>,
    pub iterations: usize,
}

impl SppSolution {
    pub fn clock(&self, c: Constellation) -> Option<f64> {
        self.clock_biases.get(&c).copied()
    }
}

struct Row {
    sat: SatelliteId,
    unit: Vector3<f64>,
    residual: f64,
    weight: f64,
}

/// Iterated weighted least-squares position and multi-system clock solution.
pub fn solve_spp(
    epoch: &Epoch,
    sats: &SatelliteStates,
    iono: &KlobucharParams,
    tropo: &TropoModel,
    config: &EstimationConfig,
    initial: Option<EcefVector>,
) -> Result<SppSolution, EstimationError> {
    let mut position = initial.unwrap_or_else(Vector3::zeros);
    let mut clocks = [0.0f64; 4];
    let mask = config.elevation_mask();

    for iteration in 1..=config.max_iterations {
        let near_surface = position.norm() > SURFACE_RADIUS;
        let geodetic = if near_surface { ecef_to_geodetic(&position).ok() } else { None };

        let mut rows = Vec::with_capacity(epoch.observations.len());
        for obs in &epoch.observations {
            let Some(sat) = sats.get(&obs.sat) else {
                continue;
            };
            let Ok(los) = line_of_sight(&position, sat) else {
                continue;
            };
            let (correction, elevation) = match &geodetic {
                Some(geo) => {
                    let (el, az) = elevation_azimuth(geo, &los.satellite_at_reception_frame);
                    if el < mask {
                        continue;
                    }
                    let Ok(trop) = saastamoinen_delay(tropo, geo, el) else {
                        continue;
                    };
                    (klobuchar_delay(iono, epoch.time, geo, el, az) + trop, el)
                }
                None => (0.0, std::f64::consts::FRAC_PI_2),
            };
            let system = obs.sat.constellation;
            let clock = clocks[0] + if system == Constellation::Gps { 0.0 } else { clocks[system.index()] };
            let predicted = los.range + clock - SPEED_OF_LIGHT * sat.clock_bias + correction;
            rows.push(Row {
                sat: obs.sat,
                unit: los.unit,
                residual: obs.pseudorange - predicted,
                weight: 1.0 / config.pseudorange_variance(elevation),
            });
        }

        let (h, w, v, active) = design(&rows)?;
        let ht_w = h.transpose() * DMatrix::from_diagonal(&w);
        let normal = &ht_w * &h;
        let condition = condition_number(&normal);
        if !(condition <= config.max_condition_number) {
            return Err(EstimationError::SingularGeometry { condition });
        }
        let chol = normal.clone().cholesky().ok_or(EstimationError::SingularGeometry { condition: f64::INFINITY })?;
        let dx = chol.solve(&(&ht_w * &v));

        let step = Vector3::new(dx[0], dx[1], dx[2]);
        position += step;
        for (k, c) in active.iter().enumerate() {
            clocks[c.index()] += dx[3 + k];
        }

        if near_surface && step.norm() < config.convergence_threshold {
            let inverse = chol.inverse();
            let mut covariance = SMatrix::<f64, 7, 7>::zeros();
            let map: Vec<usize> = (0..3).chain(active.iter().map(|c| 3 + c.index())).collect();
            for (a, &ia) in map.iter().enumerate() {
                for (b, &ib) in map.iter().enumerate() {
                    covariance[(ia, ib)] = inverse[(a, b)];
                }
            }
            let mut used_satellites = BTreeMap::new();
            for r in &rows {
                *used_satellites.entry(r.sat.constellation).or_insert(0) += 1;
            }
            // Residuals after the final (sub-threshold) update.
            let residuals =
                rows.iter().enumerate().map(|(i, r)| (r.sat, v[i] - (h.row(i) * &dx)[0], r.weight)).collect();
            return Ok(SppSolution {
                time: epoch.time,
                position,
                clock_biases: active.iter().map(|c| (*c, clocks[c.index()])).collect(),
                covariance,
                used_satellites,
                residuals,
                iterations: iteration,
            });
        }
    }
    Err(EstimationError::NoConvergence { iterations: config.max_iterations })
}

/// Builds the design matrix `[-u, 1, system flags]` over the active systems.
/// Design matrix, residuals, weights and the estimated clock systems.
type Design = (DMatrix<f64>, DVector<f64>, DVector<f64>, Vec<Constellation>);

fn design(rows: &[Row]) -> Result<Design, EstimationError> {
    let mut active: Vec<Constellation> = rows.iter().map(|r| r.sat.constellation).collect();
    active.sort();
    active.dedup();
    let unknowns = 3 + active.len();
    let has_gps = active.first() == Some(&Constellation::Gps);
    if !has_gps || rows.len() < unknowns.max(4) {
        return Err(EstimationError::InsufficientSatellites { available: rows.len(), required: unknowns.max(4) });
    }
    let mut h = DMatrix::zeros(rows.len(), unknowns);
    for (i, r) in rows.iter().enumerate() {
        h[(i, 0)] = -r.unit.x;
        h[(i, 1)] = -r.unit.y;
        h[(i, 2)] = -r.unit.z;
        h[(i, 3)] = 1.0;
        if r.sat.constellation != Constellation::Gps {
            let k = active.iter().position(|c| *c == r.sat.constellation).unwrap();
            h[(i, 3 + k)] = 1.0;
        }
    }
    let w = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.weight));
    let v = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.residual));
    Ok((h, w, v, active))
}
