//! Time-relative RTK: carrier-phase baselines between two epochs of one receiver.

mod chain;
mod lambda;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{klobuchar_delay, saastamoinen_delay, KlobucharParams, TropoModel};
use crate::estimation::SatelliteStates;
use crate::gnss::{
    ecef_to_geodetic, elevation_azimuth, line_of_sight, Constellation, EcefVector, Epoch, GpsTime, SatelliteId,
};

pub use chain::PriorChain;
pub use lambda::{decorrelate, lambda_resolve, AmbiguityProblem, LambdaSolution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrRtkError {
    #[error("satellite {0} missing from epoch")]
    MissingSatellite(SatelliteId),
    #[error("insufficient satellites: {available} double differences, {required} required")]
    InsufficientSatellites { available: usize, required: usize },
    #[error("singular baseline geometry")]
    SingularGeometry,
    #[error("ambiguity covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("integer search did not terminate")]
    SearchFailed,
    #[error("time difference {time_difference:.1} s exceeds the {window:.1} s window")]
    WindowExceeded { time_difference: f64, window: f64 },
    #[error("receiver position is invalid: {0}")]
    InvalidPosition(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrRtkConfig {
    /// Longest allowed time between the two epochs (s).
    pub max_time_difference: f64,
    pub ratio_threshold: f64,
    /// Satellites below this elevation at either epoch are not differenced (deg).
    pub elevation_mask_deg: f64,
    /// Zenith carrier-phase standard deviation (m), scaled by 1/sin(el).
    pub phase_sigma: f64,
    /// Zenith pseudorange standard deviation (m), scaled by 1/sin(el).
    pub code_sigma: f64,
    /// Time differences (s) attempted for every epoch.
    pub candidate_lattice: Vec<f64>,
    /// Minimum number of double differences.
    pub min_double_differences: usize,
    /// Resolve integers; when false, results stay Float.
    pub fix_ambiguities: bool,
}

impl Default for TrRtkConfig {
    fn default() -> Self {
        Self {
            max_time_difference: 100.0,
            ratio_threshold: 3.0,
            elevation_mask_deg: 15.0,
            phase_sigma: 0.003,
            code_sigma: 0.5,
            candidate_lattice: vec![5.0, 10.0, 20.0, 30.0, 45.0, 60.0, 80.0, 100.0],
            min_double_differences: 4,
            fix_ambiguities: true,
        }
    }
}

/// One receiver epoch together with the satellite states and the
/// approximate receiver position used for linearization.
#[derive(Debug, Clone, Copy)]
pub struct EpochContext<'a> {
    /// Position of the epoch in the receiver's uninterrupted epoch stream;
    /// lock counters are compared against this spacing.
    pub index: usize,
    pub epoch: &'a Epoch,
    pub satellites: &'a SatelliteStates,
    pub position: EcefVector,
}

/// Atmospheric models used to predict the change of the delays between epochs.
#[derive(Debug, Clone, Copy)]
pub struct Corrections<'a> {
    pub iono: &'a KlobucharParams,
    pub tropo: &'a TropoModel,
}

/// Satellites tracked in both epochs without a loss of lock in between.
///
/// `elapsed_epochs` is the number of receiver epochs separating the two; a
/// satellite that kept lock has a lock counter that grew by at least that much.
pub fn detect_cycle_slips(past: &Epoch, current: &Epoch, elapsed_epochs: u32) -> BTreeSet<SatelliteId> {
    let (early, late) = if past.time <= current.time { (past, current) } else { (current, past) };
    late.observations
        .iter()
        .filter(|obs| !obs.loss_of_lock || elapsed_epochs == 0)
        .filter_map(|obs| {
            let before = early.get(obs.sat)?;
            (u64::from(obs.lock_count) >= u64::from(before.lock_count) + u64::from(elapsed_epochs)).then_some(obs.sat)
        })
        .collect()
}

fn time_difference_with(
    past: &Epoch,
    current: &Epoch,
    sats: &BTreeSet<SatelliteId>,
    value: impl Fn(&crate::gnss::Observation) -> f64,
) -> Result<BTreeMap<SatelliteId, f64>, TrRtkError> {
    sats.iter()
        .map(|&sat| {
            let a = past.get(sat).ok_or(TrRtkError::MissingSatellite(sat))?;
            let b = current.get(sat).ok_or(TrRtkError::MissingSatellite(sat))?;
            Ok((sat, value(b) - value(a)))
        })
        .collect()
}

/// Between-epoch carrier-phase differences `λ·(φ_current − φ_past)` in meters.
/// Satellite clock changes are left in the difference.
pub fn time_single_difference(
    past: &Epoch,
    current: &Epoch,
    sats: &BTreeSet<SatelliteId>,
) -> Result<BTreeMap<SatelliteId, f64>, TrRtkError> {
    time_difference_with(past, current, sats, |o| o.wavelength * o.carrier_phase)
}

/// One between-satellite, between-epoch double difference.
#[derive(Debug, Clone, PartialEq)]
pub struct DdEntry {
    pub sat: SatelliteId,
    pub reference: SatelliteId,
    /// Double-differenced carrier phase (m).
    pub dd_phase: f64,
    /// Double-differenced pseudorange (m).
    pub dd_code: f64,
    /// Double-differenced geometric range change at the linearization
    /// positions (m).
    pub dd_range_model: f64,
    /// Double-differenced modeled ionospheric delay change (m, code sign).
    pub dd_iono: f64,
    /// Double-differenced modeled tropospheric delay change (m).
    pub dd_tropo: f64,
    /// Current-epoch unit vectors to the satellite and to the reference.
    pub los_current: (EcefVector, EcefVector),
    pub wavelength: f64,
}

impl DdEntry {
    /// Row of the linearized observation model with respect to a baseline
    /// correction: `−(L_k − L_l)`.
    pub fn geometry(&self) -> Vector3<f64> {
        -(self.los_current.0 - self.los_current.1)
    }

    pub fn phase_residual(&self) -> f64 {
        self.dd_phase - (self.dd_range_model - self.dd_iono + self.dd_tropo)
    }

    pub fn code_residual(&self) -> f64 {
        self.dd_code - (self.dd_range_model + self.dd_iono + self.dd_tropo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleDiffSet {
    pub past: GpsTime,
    pub current: GpsTime,
    pub reference_sats: BTreeMap<Constellation, SatelliteId>,
    pub entries: Vec<DdEntry>,
    /// Baseline between the linearization positions.
    pub linearization_baseline: EcefVector,
    /// Covariance of the double-differenced phases (m²).
    pub phase_covariance: DMatrix<f64>,
    /// Covariance of the double-differenced pseudoranges (m²).
    pub code_covariance: DMatrix<f64>,
}

struct SatGeometry {
    range_change: f64,
    iono_change: f64,
    tropo_change: f64,
    unit_current: EcefVector,
    elevation_current: f64,
    phase_var: f64,
    code_var: f64,
}

/// Forms within-constellation double differences against the highest
/// satellite at the current epoch.
pub fn form_double_differences(
    sd: &BTreeMap<SatelliteId, f64>,
    past: &EpochContext<'_>,
    current: &EpochContext<'_>,
    corrections: &Corrections<'_>,
    config: &TrRtkConfig,
) -> Result<DoubleDiffSet, TrRtkError> {
    let geo_past = ecef_to_geodetic(&past.position).map_err(|e| TrRtkError::InvalidPosition(e.to_string()))?;
    let geo_cur = ecef_to_geodetic(&current.position).map_err(|e| TrRtkError::InvalidPosition(e.to_string()))?;
    let mask = config.elevation_mask_deg.to_radians();
    let sats: BTreeSet<SatelliteId> = sd.keys().copied().collect();
    let code_sd = time_difference_with(past.epoch, current.epoch, &sats, |o| o.pseudorange)?;

    let mut geometry: BTreeMap<SatelliteId, SatGeometry> = BTreeMap::new();
    for &sat in &sats {
        let (Some(sp), Some(sc)) = (past.satellites.get(&sat), current.satellites.get(&sat)) else {
            continue;
        };
        let (Ok(lp), Ok(lc)) = (line_of_sight(&past.position, sp), line_of_sight(&current.position, sc)) else {
            continue;
        };
        let (el_p, az_p) = elevation_azimuth(&geo_past, &lp.satellite_at_reception_frame);
        let (el_c, az_c) = elevation_azimuth(&geo_cur, &lc.satellite_at_reception_frame);
        if el_p < mask || el_c < mask {
            continue;
        }
        let (Ok(tp), Ok(tc)) = (
            saastamoinen_delay(corrections.tropo, &geo_past, el_p),
            saastamoinen_delay(corrections.tropo, &geo_cur, el_c),
        ) else {
            continue;
        };
        let ip = klobuchar_delay(corrections.iono, past.epoch.time, &geo_past, el_p, az_p);
        let ic = klobuchar_delay(corrections.iono, current.epoch.time, &geo_cur, el_c, az_c);
        let var = |sigma: f64| (sigma / el_p.sin()).powi(2) + (sigma / el_c.sin()).powi(2);
        geometry.insert(
            sat,
            SatGeometry {
                range_change: lc.range - lp.range,
                iono_change: ic - ip,
                tropo_change: tc - tp,
                unit_current: lc.unit,
                elevation_current: el_c,
                phase_var: var(config.phase_sigma),
                code_var: var(config.code_sigma),
            },
        );
    }

    let mut reference_sats = BTreeMap::new();
    for (sat, g) in &geometry {
        let best = reference_sats.entry(sat.constellation).or_insert(*sat);
        if g.elevation_current > geometry[best].elevation_current {
            *best = *sat;
        }
    }

    let mut entries = Vec::new();
    // (row owner, reference) for the covariance assembly.
    let mut pairs = Vec::new();
    for (&sat, g) in &geometry {
        let reference = reference_sats[&sat.constellation];
        if sat == reference {
            continue;
        }
        let wavelength = current.epoch.get(sat).map(|o| o.wavelength).unwrap_or(0.0);
        let ref_wavelength = current.epoch.get(reference).map(|o| o.wavelength).unwrap_or(0.0);
        // Differences only cancel the ambiguity cleanly on a common carrier.
        if wavelength != ref_wavelength {
            continue;
        }
        let r = &geometry[&reference];
        entries.push(DdEntry {
            sat,
            reference,
            dd_phase: sd[&sat] - sd[&reference],
            dd_code: code_sd[&sat] - code_sd[&reference],
            dd_range_model: g.range_change - r.range_change,
            dd_iono: g.iono_change - r.iono_change,
            dd_tropo: g.tropo_change - r.tropo_change,
            los_current: (g.unit_current, r.unit_current),
            wavelength,
        });
        pairs.push((sat, reference));
    }
    if entries.len() < config.min_double_differences {
        return Err(TrRtkError::InsufficientSatellites {
            available: entries.len(),
            required: config.min_double_differences,
        });
    }

    let m = entries.len();
    let covariance = |var: &dyn Fn(&SatGeometry) -> f64| {
        DMatrix::from_fn(m, m, |i, j| {
            let (si, ri) = pairs[i];
            let (sj, rj) = pairs[j];
            let mut c = 0.0;
            if si == sj {
                c += var(&geometry[&si]);
            }
            if ri == rj {
                c += var(&geometry[&ri]);
            }
            c
        })
    };
    Ok(DoubleDiffSet {
        past: past.epoch.time,
        current: current.epoch.time,
        reference_sats,
        entries,
        linearization_baseline: current.position - past.position,
        phase_covariance: covariance(&|g| g.phase_var),
        code_covariance: covariance(&|g| g.code_var),
    })
}

/// Independent estimate of the baseline, e.g. from integrated velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselinePrior {
    pub baseline: EcefVector,
    pub covariance: Matrix3<f64>,
}

impl BaselinePrior {
    /// Trapezoidal integral of velocities sampled at `times`, from the first
    /// to the last sample. Velocity errors are taken as independent between
    /// epochs; `process_sigma` (m/s) adds `(process_sigma·T)²` per axis for
    /// motion the trapezoid rule does not capture.
    pub fn from_velocities(
        times: &[GpsTime],
        velocities: &[Vector3<f64>],
        covariances: &[Matrix3<f64>],
        process_sigma: f64,
    ) -> Option<Self> {
        let n = times.len();
        if n < 2 || velocities.len() != n || covariances.len() != n {
            return None;
        }
        let mut baseline = Vector3::zeros();
        let mut weights = vec![0.0; n];
        for k in 0..n - 1 {
            let dt = times[k + 1].diff(&times[k]);
            baseline += (velocities[k] + velocities[k + 1]) * (dt / 2.0);
            weights[k] += dt / 2.0;
            weights[k + 1] += dt / 2.0;
        }
        let span = times[n - 1].diff(&times[0]);
        let mut covariance = Matrix3::identity() * (process_sigma * span).powi(2);
        for (w, c) in weights.iter().zip(covariances) {
            covariance += c * (w * w);
        }
        Some(Self { baseline, covariance })
    }
}

/// Joint real-valued solution for the baseline and double-difference ambiguities.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatSolution {
    pub baseline: EcefVector,
    pub ambiguity: AmbiguityProblem,
    /// Covariance over `[baseline (3), ambiguities (m)]`.
    pub joint_covariance: DMatrix<f64>,
}

fn information(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, TrRtkError> {
    cov.clone().cholesky().map(|c| c.inverse()).ok_or(TrRtkError::SingularGeometry)
}

/// Weighted least squares over DD phase, DD code and an optional baseline prior.
pub fn solve_float_baseline(dd: &DoubleDiffSet, prior: Option<&BaselinePrior>) -> Result<FloatSolution, TrRtkError> {
    let m = dd.entries.len();
    if m < 1 {
        return Err(TrRtkError::InsufficientSatellites { available: m, required: 1 });
    }
    let n = 3 + m;
    let mut a_phase = DMatrix::zeros(m, n);
    let mut a_code = DMatrix::zeros(m, n);
    let mut y_phase = DVector::zeros(m);
    let mut y_code = DVector::zeros(m);
    for (i, e) in dd.entries.iter().enumerate() {
        let g = e.geometry();
        for k in 0..3 {
            a_phase[(i, k)] = g[k];
            a_code[(i, k)] = g[k];
        }
        a_phase[(i, 3 + i)] = e.wavelength;
        y_phase[i] = e.phase_residual();
        y_code[i] = e.code_residual();
    }
    let w_phase = information(&dd.phase_covariance)?;
    let w_code = information(&dd.code_covariance)?;
    let mut normal = a_phase.transpose() * &w_phase * &a_phase + a_code.transpose() * &w_code * &a_code;
    let mut rhs = a_phase.transpose() * &w_phase * &y_phase + a_code.transpose() * &w_code * &y_code;
    if let Some(p) = prior {
        let w = p.covariance.cholesky().map(|c| c.inverse()).ok_or(TrRtkError::SingularGeometry)?;
        let y = p.baseline - dd.linearization_baseline;
        let mut block = normal.fixed_view_mut::<3, 3>(0, 0);
        block += w;
        let mut top = rhs.fixed_rows_mut::<3>(0);
        top += w * y;
    }
    let chol = normal.cholesky().ok_or(TrRtkError::SingularGeometry)?;
    let x = chol.solve(&rhs);
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(FloatSolution {
        baseline: dd.linearization_baseline + x.fixed_rows::<3>(0).into_owned(),
        ambiguity: AmbiguityProblem {
            float_values: x.rows(3, m).into_owned(),
            covariance: cov.view((3, 3), (m, m)).into_owned(),
        },
        joint_covariance: cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrRtkStatus {
    Fixed,
    Float,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrRtkResult {
    pub past: GpsTime,
    pub current: GpsTime,
    /// Displacement from the past to the current position (m).
    pub baseline: EcefVector,
    pub covariance: Matrix3<f64>,
    pub status: TrRtkStatus,
    /// Second-best over best integer candidate distance; 1 when unresolved.
    pub ratio: f64,
    /// `current − past` (s).
    pub time_difference: f64,
    /// Integer double-difference ambiguities (cycles); empty unless resolved.
    pub dd_ambiguities: Vec<i64>,
    pub satellites: usize,
}

impl TrRtkResult {
    /// Only fixed solutions are trusted as loop closures.
    pub fn is_edge(&self) -> bool {
        self.status == TrRtkStatus::Fixed
    }
}

/// Baseline with the DD ambiguities held at `integers`, from DD phase and
/// code alone. The prior only serves ambiguity resolution, so overlapping
/// loop closures do not share its information.
pub fn solve_fixed_baseline(dd: &DoubleDiffSet, integers: &[i64]) -> Result<(EcefVector, Matrix3<f64>), TrRtkError> {
    let m = dd.entries.len();
    if integers.len() != m {
        return Err(TrRtkError::InsufficientSatellites { available: integers.len(), required: m });
    }
    let mut g = DMatrix::zeros(m, 3);
    let mut y_phase = DVector::zeros(m);
    let mut y_code = DVector::zeros(m);
    for (i, (e, n)) in dd.entries.iter().zip(integers).enumerate() {
        let row = e.geometry();
        for k in 0..3 {
            g[(i, k)] = row[k];
        }
        y_phase[i] = e.phase_residual() - e.wavelength * *n as f64;
        y_code[i] = e.code_residual();
    }
    let w_phase = information(&dd.phase_covariance)?;
    let w_code = information(&dd.code_covariance)?;
    let gt = g.transpose();
    let normal = &gt * (&w_phase + &w_code) * &g;
    let rhs = &gt * (&w_phase * y_phase + &w_code * y_code);
    let normal = Matrix3::from_iterator(normal.iter().copied());
    let chol = normal.cholesky().ok_or(TrRtkError::SingularGeometry)?;
    let x = chol.solve(&Vector3::new(rhs[0], rhs[1], rhs[2]));
    let cov = chol.inverse();
    Ok((dd.linearization_baseline + x, (cov + cov.transpose()) * 0.5))
}

/// Full single-pair pipeline: lock check, differencing, float solution,
/// integer resolution and the fixed baseline.
pub fn estimate_baseline(
    past: &EpochContext<'_>,
    current: &EpochContext<'_>,
    corrections: &Corrections<'_>,
    prior: Option<&BaselinePrior>,
    config: &TrRtkConfig,
) -> Result<TrRtkResult, TrRtkError> {
    let time_difference = current.epoch.time.diff(&past.epoch.time);
    if time_difference.abs() > config.max_time_difference + 1e-9 {
        return Err(TrRtkError::WindowExceeded { time_difference, window: config.max_time_difference });
    }
    let elapsed = u32::try_from(current.index.abs_diff(past.index)).unwrap_or(u32::MAX);
    let locked = detect_cycle_slips(past.epoch, current.epoch, elapsed);
    let sd = time_single_difference(past.epoch, current.epoch, &locked)?;
    let dd = form_double_differences(&sd, past, current, corrections, config)?;
    let float = solve_float_baseline(&dd, prior)?;
    let m = dd.entries.len();
    let float_cov = float.joint_covariance.fixed_view::<3, 3>(0, 0).into_owned();

    let unresolved = |status| TrRtkResult {
        past: past.epoch.time,
        current: current.epoch.time,
        baseline: float.baseline,
        covariance: float_cov,
        status,
        ratio: 1.0,
        time_difference,
        dd_ambiguities: Vec::new(),
        satellites: m,
    };
    if !config.fix_ambiguities {
        return Ok(unresolved(TrRtkStatus::Float));
    }
    let solution = lambda_resolve(&float.ambiguity, config.ratio_threshold)?;
    if !solution.accepted {
        log::debug!("pair {} -> {} rejected, ratio {:.2}", past.epoch.time, current.epoch.time, solution.ratio);
        return Ok(TrRtkResult { ratio: solution.ratio, ..unresolved(TrRtkStatus::Rejected) });
    }

    let (mut baseline, mut covariance) = solve_fixed_baseline(&dd, &solution.integers)?;
    // The delay-change model depends on where the epochs are; evaluate it
    // once more with the current epoch placed at the fixed baseline.
    let moved = EpochContext { position: past.position + baseline, ..*current };
    if let Ok(refined) = form_double_differences(&sd, past, &moved, corrections, config) {
        let same = refined.entries.len() == m
            && refined.entries.iter().zip(&dd.entries).all(|(a, b)| a.sat == b.sat && a.reference == b.reference);
        if same {
            (baseline, covariance) = solve_fixed_baseline(&refined, &solution.integers)?;
        }
    }
    Ok(TrRtkResult {
        past: past.epoch.time,
        current: current.epoch.time,
        baseline,
        covariance,
        status: TrRtkStatus::Fixed,
        ratio: solution.ratio,
        time_difference,
        dd_ambiguities: solution.integers,
        satellites: m,
    })
}

/// Epoch index pairs `(past, current)` whose separation matches one of the
/// lattice time differences within `tolerance` seconds.
pub fn candidate_pairs(times: &[GpsTime], lattice: &[f64], window: f64, tolerance: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, t) in times.iter().enumerate() {
        for &dt in lattice {
            if dt <= 0.0 || dt > window + 1e-9 {
                continue;
            }
            let target = t.add_seconds(-dt);
            let j = times[..i].partition_point(|x| x.diff(&target) < -tolerance);
            if j < i && times[j].diff(&target).abs() <= tolerance {
                pairs.push((j, i));
            }
        }
    }
    pairs
}
