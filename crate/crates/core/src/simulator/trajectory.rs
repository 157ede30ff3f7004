use std::f64::consts::PI;

use nalgebra::Vector3;

use super::scenario::{ScenarioConfig, TrajectorySpec};
use super::SimulatorError;
use crate::gnss::{enu_rotation, geodetic_to_ecef, EcefVector, GpsTime};

/// Ground-truth receiver state at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRecord {
    pub time: GpsTime,
    pub position: EcefVector,
    pub velocity: EcefVector,
}

/// Continuous vehicle motion in the local ENU frame.
#[derive(Debug, Clone)]
pub enum Motion {
    Static,
    Line { velocity: Vector3<f64> },
    Circle { radius: f64, rate: f64 },
    Waypoints(WaypointPath),
}

impl Motion {
    pub fn from_config(config: &ScenarioConfig) -> Result<Self, SimulatorError> {
        Ok(match &config.trajectory {
            TrajectorySpec::Static => Motion::Static,
            TrajectorySpec::Line { heading_deg } => {
                let h = heading_deg.to_radians();
                Motion::Line { velocity: config.speed * Vector3::new(h.sin(), h.cos(), 0.0) }
            }
            TrajectorySpec::Circle { radius } => {
                if !(*radius > 0.0) {
                    return Err(SimulatorError::InvalidConfig(format!("circle radius {radius}")));
                }
                Motion::Circle { radius: *radius, rate: config.speed / radius }
            }
            TrajectorySpec::Waypoints { points } => Motion::Waypoints(WaypointPath::new(
                points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
                config.speed,
                config.blend_time,
            )?),
        })
    }

    /// ENU position and velocity `t` seconds after the start.
    pub fn state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Motion::Static => (Vector3::zeros(), Vector3::zeros()),
            Motion::Line { velocity } => (velocity * t, *velocity),
            Motion::Circle { radius, rate } => {
                let (s, c) = (rate * t).sin_cos();
                (
                    Vector3::new(radius * s, radius * (1.0 - c), 0.0),
                    Vector3::new(radius * rate * c, radius * rate * s, 0.0),
                )
            }
            Motion::Waypoints(path) => path.state(t),
        }
    }
}

/// Constant-speed legs joined by cosine velocity blends centered on each
/// waypoint, ending with a blended stop at the last point. The blend has zero
/// net displacement relative to the sharp-cornered path, so the vehicle
/// rejoins each leg after the blend.
#[derive(Debug, Clone)]
pub struct WaypointPath {
    points: Vec<Vector3<f64>>,
    /// Leg velocities (one per leg).
    velocities: Vec<Vector3<f64>>,
    /// Arrival time at each point (first entry 0).
    times: Vec<f64>,
    half_blend: f64,
}

impl WaypointPath {
    pub fn new(points: Vec<Vector3<f64>>, speed: f64, blend_time: f64) -> Result<Self, SimulatorError> {
        let invalid = |m: String| Err(SimulatorError::InvalidWaypoints(m));
        if points.len() < 2 {
            return invalid(format!("need at least 2 points, got {}", points.len()));
        }
        if !(speed > 0.0) {
            return invalid(format!("speed must be positive, got {speed}"));
        }
        if !(blend_time >= 0.0) {
            return invalid(format!("blend time must be non-negative, got {blend_time}"));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return invalid("non-finite coordinate".into());
        }
        let mut velocities = Vec::new();
        let mut times = vec![0.0];
        for (k, w) in points.windows(2).enumerate() {
            let leg = w[1] - w[0];
            let duration = leg.norm() / speed;
            // A blend may take at most half of each adjoining leg.
            if duration < blend_time {
                return invalid(format!("leg {k} lasts {duration:.2} s, shorter than the {blend_time} s blend"));
            }
            velocities.push(leg / duration);
            times.push(times[k] + duration);
        }
        Ok(Self { points, velocities, times, half_blend: blend_time / 2.0 })
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Leg velocity before and after waypoint `k` (k ≥ 1).
    fn velocity_change(&self, k: usize) -> Vector3<f64> {
        let after = self.velocities.get(k).copied().unwrap_or_else(Vector3::zeros);
        after - self.velocities[k - 1]
    }

    pub fn state(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let last = self.points.len() - 1;
        // Sharp-cornered path.
        let (mut pos, mut vel) = if t >= self.times[last] {
            (self.points[last], Vector3::zeros())
        } else {
            let k = self.times.partition_point(|&tk| tk <= t).saturating_sub(1);
            (self.points[k] + self.velocities[k] * (t - self.times[k]), self.velocities[k])
        };
        let b = self.half_blend;
        if b == 0.0 {
            return (pos, vel);
        }
        for k in 1..=last {
            let tc = self.times[k];
            if (t - tc).abs() >= b {
                continue;
            }
            let dv = self.velocity_change(k);
            let s = t - tc + b;
            let weight = (1.0 - (PI * s / (2.0 * b)).cos()) / 2.0;
            let integral = s / 2.0 - b / PI * (PI * s / (2.0 * b)).sin();
            // Blended velocity is v_before + dv·weight on the whole window.
            pos += dv * (integral - (t - tc).max(0.0));
            vel += dv * (weight - if t >= tc { 1.0 } else { 0.0 });
        }
        (pos, vel)
    }
}

/// Truth positions and velocities at every epoch of the scenario.
pub fn generate_trajectory(config: &ScenarioConfig) -> Result<Vec<TruthRecord>, SimulatorError> {
    let motion = Motion::from_config(config)?;
    let origin = config.origin.geodetic();
    let origin_ecef = geodetic_to_ecef(&origin);
    let to_ecef = enu_rotation(&origin).transpose();
    Ok((0..config.epoch_count())
        .map(|k| {
            let (p, v) = motion.state(k as f64 / config.rate);
            TruthRecord { time: config.epoch_time(k), position: origin_ecef + to_ecef * p, velocity: to_ecef * v }
        })
        .collect())
}
