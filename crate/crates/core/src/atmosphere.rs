//! Broadcast ionosphere and standard-atmosphere troposphere delay models.
//!
//! The same functions are used to synthesize measurements and to correct them,
//! so on simulated data the model delays cancel exactly.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnss::{GeodeticPosition, GpsTime, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtmosphereError {
    #[error("elevation {elevation_deg:.2}° is below the 1° troposphere model limit")]
    ElevationTooLow { elevation_deg: f64 },
    #[error("invalid troposphere model: {0}")]
    InvalidModel(String),
}

/// Eight broadcast ionosphere coefficients: amplitude (`alpha`) and period
/// (`beta`) cubic polynomials in geomagnetic latitude.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KlobucharParams {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
}

impl KlobucharParams {
    pub fn is_zero(&self) -> bool {
        self.alpha.iter().chain(self.beta.iter()).all(|c| *c == 0.0)
    }
}

/// Slant ionospheric group delay in meters.
///
/// `elevation` and `azimuth` are in radians. Negative elevations return zero.
pub fn klobuchar_delay(
    params: &KlobucharParams,
    time: GpsTime,
    user: &GeodeticPosition,
    elevation: f64,
    azimuth: f64,
) -> f64 {
    if elevation < 0.0 {
        return 0.0;
    }
    // Everything below is in semicircles.
    let el = elevation / PI;
    let psi = 0.0137 / (el + 0.11) - 0.022;
    let phi_i = (user.latitude / PI + psi * azimuth.cos()).clamp(-0.416, 0.416);
    let lambda_i = user.longitude / PI + psi * azimuth.sin() / (phi_i * PI).cos();
    let phi_m = phi_i + 0.064 * ((lambda_i - 1.617) * PI).cos();

    let local_time = (43_200.0 * lambda_i + time.tow).rem_euclid(86_400.0);
    let obliquity = 1.0 + 16.0 * (0.53 - el).powi(3);

    let a = &params.alpha;
    let b = &params.beta;
    let amp = (a[0] + phi_m * (a[1] + phi_m * (a[2] + phi_m * a[3]))).max(0.0);
    let per = (b[0] + phi_m * (b[1] + phi_m * (b[2] + phi_m * b[3]))).max(72_000.0);
    let x = 2.0 * PI * (local_time - 50_400.0) / per;

    let delay = if x.abs() < 1.57 { 5e-9 + amp * (1.0 - x * x / 2.0 + x.powi(4) / 24.0) } else { 5e-9 };
    SPEED_OF_LIGHT * obliquity * delay
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TropoKind {
    #[default]
    Saastamoinen,
}

/// Surface meteorology at mean sea level, scaled to the user height with a
/// standard lapse rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TropoModel {
    pub kind: TropoKind,
    /// hPa
    pub pressure: f64,
    /// K
    pub temperature: f64,
    /// relative humidity, 0..1
    pub humidity: f64,
}

impl Default for TropoModel {
    fn default() -> Self {
        Self { kind: TropoKind::Saastamoinen, pressure: 1013.25, temperature: 288.15, humidity: 0.5 }
    }
}

impl TropoModel {
    pub fn validate(&self) -> Result<(), AtmosphereError> {
        if !(500.0..=1200.0).contains(&self.pressure) {
            return Err(AtmosphereError::InvalidModel(format!("pressure {} hPa", self.pressure)));
        }
        if !(180.0..=340.0).contains(&self.temperature) {
            return Err(AtmosphereError::InvalidModel(format!("temperature {} K", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.humidity) {
            return Err(AtmosphereError::InvalidModel(format!("humidity {}", self.humidity)));
        }
        Ok(())
    }
}

const MIN_TROPO_ELEVATION: f64 = 1.0 * PI / 180.0;
/// The lapse-rate scaling is evaluated no higher than this (m).
const MAX_TROPO_HEIGHT: f64 = 10_000.0;

/// Slant tropospheric delay (hydrostatic + wet) in meters.
pub fn saastamoinen_delay(model: &TropoModel, user: &GeodeticPosition, elevation: f64) -> Result<f64, AtmosphereError> {
    if !(elevation >= MIN_TROPO_ELEVATION) {
        return Err(AtmosphereError::ElevationTooLow { elevation_deg: elevation.to_degrees() });
    }
    let height = user.height.clamp(0.0, MAX_TROPO_HEIGHT);
    let pressure = model.pressure * (1.0 - 2.2557e-5 * height).powf(5.2568);
    let temperature = model.temperature - 6.5e-3 * height;
    let vapor = 6.108 * model.humidity * ((17.15 * temperature - 4684.0) / (temperature - 38.45)).exp();

    let cos_z = (FRAC_PI_2 - elevation.min(FRAC_PI_2)).cos();
    let hydrostatic =
        0.002_276_8 * pressure / (1.0 - 0.002_66 * (2.0 * user.latitude).cos() - 0.000_28 * height / 1e3) / cos_z;
    let wet = 0.002_277 * (1255.0 / temperature + 0.05) * vapor / cos_z;
    Ok(hydrostatic + wet)
}
