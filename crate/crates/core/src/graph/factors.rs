use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::atmosphere::{klobuchar_delay, saastamoinen_delay, KlobucharParams, TropoModel};
use crate::gnss::{
    ecef_to_geodetic, elevation_azimuth, line_of_sight, Constellation, EcefVector, GpsTime, SatelliteId,
    SatelliteState, EARTH_ROTATION_RATE, SPEED_OF_LIGHT,
};

pub const STATE_DIM: usize = 7;
pub type Vector7 = SVector<f64, STATE_DIM>;
pub type Jacobian3 = SMatrix<f64, 3, STATE_DIM>;

/// Node unknowns: position relative to the graph origin and one clock term
/// per system (GPS receiver clock, then inter-system offsets), all in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub position_offset: Vector3<f64>,
    pub clock_bias: [f64; 4],
}

impl StateVector {
    pub fn clock(&self, c: Constellation) -> f64 {
        self.clock_bias[c.index()]
    }

    pub fn to_vector(&self) -> Vector7 {
        let p = &self.position_offset;
        let c = &self.clock_bias;
        Vector7::from_column_slice(&[p.x, p.y, p.z, c[0], c[1], c[2], c[3]])
    }

    pub fn from_vector(v: &Vector7) -> Self {
        Self { position_offset: Vector3::new(v[0], v[1], v[2]), clock_bias: [v[3], v[4], v[5], v[6]] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

fn position_jacobian(sign: f64) -> Jacobian3 {
    let mut j = Jacobian3::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * sign));
    j
}

/// Consecutive-node displacement predicted by a measured velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityFactor {
    pub node_i: usize,
    pub node_j: usize,
    pub measured_velocity: Vector3<f64>,
    pub dt: f64,
    pub information: Matrix3<f64>,
}

impl VelocityFactor {
    /// `(d_j − d_i) − V·Δt`.
    pub fn residual(&self, xi: &StateVector, xj: &StateVector) -> Vector3<f64> {
        xj.position_offset - xi.position_offset - self.measured_velocity * self.dt
    }

    /// Jacobians with respect to node i and node j.
    pub fn jacobians(&self) -> (Jacobian3, Jacobian3) {
        (position_jacobian(-1.0), position_jacobian(1.0))
    }
}

/// Loop closure from a fixed carrier-phase baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrRtkFactor {
    pub node_past: usize,
    pub node_current: usize,
    pub baseline: Vector3<f64>,
    pub information: Matrix3<f64>,
    pub time_difference: f64,
}

impl TrRtkFactor {
    /// `(d_current − d_past) − B`.
    pub fn residual(&self, x_past: &StateVector, x_current: &StateVector) -> Vector3<f64> {
        x_current.position_offset - x_past.position_offset - self.baseline
    }

    /// Jacobians with respect to the past and the current node.
    pub fn jacobians(&self) -> (Jacobian3, Jacobian3) {
        (position_jacobian(-1.0), position_jacobian(1.0))
    }
}

/// Pseudorange linearized about a node position: `e = H·x − z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudorangeFactor {
    pub node: usize,
    pub sat: SatelliteId,
    pub time: GpsTime,
    pub satellite: SatelliteState,
    pub pseudorange: f64,
    /// `ρ − r₀ + c·δT − I − T + H_pos·d₀` at the linearization point.
    pub corrected_measurement: f64,
    pub row: Vector7,
    pub information: f64,
    pub elevation: f64,
    /// Node offset at which `row` and `corrected_measurement` were built.
    pub linearized_at: Vector3<f64>,
}

/// Delay models shared by every pseudorange factor of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayModels {
    pub iono: KlobucharParams,
    pub tropo: TropoModel,
}

struct Linearization {
    row: Vector7,
    corrected: f64,
    elevation: f64,
}

impl PseudorangeFactor {
    /// Builds the factor at `origin + offset`. `None` when the satellite is
    /// below `mask` or the geometry is unusable.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node: usize,
        time: GpsTime,
        sat: SatelliteId,
        satellite: SatelliteState,
        pseudorange: f64,
        origin: &EcefVector,
        offset: &Vector3<f64>,
        models: &DelayModels,
        mask: f64,
        variance: impl Fn(f64) -> f64,
    ) -> Option<Self> {
        let lin = linearize(time, sat, &satellite, pseudorange, origin, offset, models)?;
        if lin.elevation < mask {
            return None;
        }
        Some(Self {
            node,
            sat,
            time,
            satellite,
            pseudorange,
            corrected_measurement: lin.corrected,
            row: lin.row,
            information: 1.0 / variance(lin.elevation),
            elevation: lin.elevation,
            linearized_at: *offset,
        })
    }

    pub fn residual(&self, x: &StateVector) -> f64 {
        self.row.dot(&x.to_vector()) - self.corrected_measurement
    }

    pub fn jacobian(&self) -> SMatrix<f64, 1, STATE_DIM> {
        self.row.transpose()
    }

    /// Rebuilds the row about `offset` when the node has moved more than
    /// `threshold` meters since the last linearization. Returns whether it did.
    pub fn relinearize(
        &mut self,
        origin: &EcefVector,
        offset: &Vector3<f64>,
        models: &DelayModels,
        threshold: f64,
    ) -> bool {
        if (offset - self.linearized_at).norm() <= threshold {
            return false;
        }
        match linearize(self.time, self.sat, &self.satellite, self.pseudorange, origin, offset, models) {
            Some(lin) => {
                self.row = lin.row;
                self.corrected_measurement = lin.corrected;
                self.elevation = lin.elevation;
                self.linearized_at = *offset;
                true
            }
            None => false,
        }
    }
}

fn linearize(
    time: GpsTime,
    sat: SatelliteId,
    satellite: &SatelliteState,
    pseudorange: f64,
    origin: &EcefVector,
    offset: &Vector3<f64>,
    models: &DelayModels,
) -> Option<Linearization> {
    let position = origin + offset;
    let los = line_of_sight(&position, satellite).ok()?;
    let geo = ecef_to_geodetic(&position).ok()?;
    let (elevation, azimuth) = elevation_azimuth(&geo, &los.satellite_at_reception_frame);
    let tropo = saastamoinen_delay(&models.tropo, &geo, elevation).ok()?;
    let iono = klobuchar_delay(&models.iono, time, &geo, elevation, azimuth);
    // The flight time, and with it the Earth rotation applied to the
    // satellite, also depends on the receiver position.
    let rot = los.satellite_at_reception_frame;
    let k = EARTH_ROTATION_RATE / SPEED_OF_LIGHT * los.unit.dot(&Vector3::new(rot.y, -rot.x, 0.0));
    let gradient = -los.unit / (1.0 - k);
    let mut row = Vector7::zeros();
    row.fixed_rows_mut::<3>(0).copy_from(&gradient);
    row[3] = 1.0;
    if sat.constellation != Constellation::Gps {
        row[3 + sat.constellation.index()] = 1.0;
    }
    let corrected =
        pseudorange - los.range + SPEED_OF_LIGHT * satellite.clock_bias - iono - tropo + gradient.dot(offset);
    Some(Linearization { row, corrected, elevation })
}

/// Weak scalar prior on one state component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub node: usize,
    /// Component index within the node state (0..7).
    pub dim: usize,
    pub mean: f64,
    pub sigma: f64,
}

impl Prior {
    pub fn residual(&self, x: &StateVector) -> f64 {
        x.to_vector()[self.dim] - self.mean
    }

    pub fn information(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnss::geodetic_to_ecef;
    use crate::gnss::GeodeticPosition;

    fn state(v: [f64; 7]) -> StateVector {
        StateVector::from_vector(&Vector7::from_column_slice(&v))
    }

    #[test]
    fn state_vector_round_trip() {
        let s = state([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(StateVector::from_vector(&s.to_vector()), s);
        assert_eq!(s.clock(Constellation::Galileo), 6.0);
    }

    #[test]
    fn velocity_residual_examples() {
        let f = VelocityFactor {
            node_i: 0,
            node_j: 1,
            measured_velocity: Vector3::zeros(),
            dt: 1.0,
            information: Matrix3::identity(),
        };
        let x = state([1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.residual(&x, &x), Vector3::zeros());
        let f = VelocityFactor { measured_velocity: Vector3::new(2.5, 0.0, 0.0), ..f };
        let xj = state([3.5, 2.0, 3.0, 9.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.residual(&x, &xj), Vector3::zeros());
    }

    #[test]
    fn trrtk_residual_examples() {
        let f = TrRtkFactor {
            node_past: 0,
            node_current: 5,
            baseline: Vector3::new(1.0, -2.0, 0.5),
            information: Matrix3::identity(),
            time_difference: 5.0,
        };
        let a = state([10.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let b = state([11.0, -2.0, 0.5, -4.0, 0.0, 0.0, 0.0]);
        assert!(f.residual(&a, &b).norm() < 1e-15);
        let zero = TrRtkFactor { baseline: Vector3::zeros(), ..f };
        assert_eq!(zero.residual(&a, &a), Vector3::zeros());
    }

    fn pseudorange_factor(sat: SatelliteId) -> (PseudorangeFactor, EcefVector) {
        let origin = geodetic_to_ecef(&GeodeticPosition::from_degrees(35.0, 139.0, 40.0));
        let up = origin.normalize();
        let satellite = SatelliteState {
            position: origin + up * 2.0e7 + Vector3::new(3.0e6, -2.0e6, 1.0e6),
            velocity: Vector3::zeros(),
            clock_bias: 1e-5,
            clock_drift: 0.0,
        };
        let models = DelayModels::default();
        let offset = Vector3::zeros();
        let lin = linearize(GpsTime::new(2200, 1000.0), sat, &satellite, 0.0, &origin, &offset, &models).unwrap();
        // Consistent measurement for clock 12 m at the linearization point.
        let rho = -lin.corrected + 12.0;
        let f = PseudorangeFactor::new(
            0,
            GpsTime::new(2200, 1000.0),
            sat,
            satellite,
            rho,
            &origin,
            &offset,
            &models,
            0.0,
            |_| 1.0,
        )
        .unwrap();
        (f, origin)
    }

    #[test]
    fn pseudorange_residual_examples() {
        let (f, _) = pseudorange_factor(SatelliteId::galileo(3));
        let mut x = StateVector::default();
        x.clock_bias[0] = 12.0;
        assert!(f.residual(&x).abs() < 1e-6);
        let mut y = x;
        y.clock_bias[0] += 1.0;
        assert!((f.residual(&y) - f.residual(&x) - 1.0).abs() < 1e-9);
        let mut z = x;
        z.clock_bias[Constellation::Glonass.index()] += 3.0;
        assert_eq!(f.residual(&z), f.residual(&x));
        assert_eq!(f.row[3 + Constellation::Galileo.index()], 1.0);
    }

    #[test]
    fn relinearization_only_past_threshold() {
        let (mut f, origin) = pseudorange_factor(SatelliteId::gps(7));
        let models = DelayModels::default();
        let before = f.clone();
        assert!(!f.relinearize(&origin, &Vector3::new(5.0, 0.0, 0.0), &models, 10.0));
        assert_eq!(f, before);
        // Horizontal move, so the delay models stay put.
        let up = origin.normalize();
        let east = Vector3::z().cross(&up).normalize();
        let moved = east * 30.0 + up.cross(&east) * -20.0;
        assert!(f.relinearize(&origin, &moved, &models, 10.0));
        assert_eq!(f.linearized_at, moved);
        // The affine model agrees with the old one to second order in the move.
        let mut x = StateVector { position_offset: moved, ..Default::default() };
        x.clock_bias[0] = 12.0;
        let d = (f.residual(&x) - before.residual(&x)).abs();
        assert!(d < 1e-3, "{d}");
    }
}
