//! Trajectory error metrics against a reference.
//!
//! The relative position error is measured from the start point:
//! `rpe_i = |(p̂_i − p̂_0) − (p_i − p_0)|`, so a constant offset of the whole
//! estimate does not count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnss::EcefVector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("length mismatch: estimate has {estimate} epochs, truth has {truth}")]
    LengthMismatch { estimate: usize, truth: usize },
    #[error("at least {required} epochs are needed, got {available}")]
    TooShort { available: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    pub mean: f64,
    pub max: f64,
    /// One value per epoch; the first is always zero.
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteError {
    pub mean: f64,
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method_label: String,
    pub epochs: usize,
    pub rpe_mean: f64,
    pub rpe_max: f64,
    pub ape_mean: f64,
    pub rpe_series: Vec<f64>,
    pub ape_series: Vec<f64>,
}

fn check(estimate: &[EcefVector], truth: &[EcefVector], required: usize) -> Result<(), EvalError> {
    if estimate.len() != truth.len() {
        return Err(EvalError::LengthMismatch { estimate: estimate.len(), truth: truth.len() });
    }
    if estimate.len() < required {
        return Err(EvalError::TooShort { available: estimate.len(), required });
    }
    Ok(())
}

/// Start-relative error; mean and max are taken over epochs 1..n.
pub fn compute_rpe(estimate: &[EcefVector], truth: &[EcefVector]) -> Result<RelativeError, EvalError> {
    check(estimate, truth, 2)?;
    let series: Vec<f64> =
        estimate.iter().zip(truth).map(|(e, t)| ((e - estimate[0]) - (t - truth[0])).norm()).collect();
    let tail = &series[1..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let max = tail.iter().copied().fold(0.0, f64::max);
    Ok(RelativeError { mean, max, series })
}

pub fn compute_ape(estimate: &[EcefVector], truth: &[EcefVector]) -> Result<AbsoluteError, EvalError> {
    check(estimate, truth, 1)?;
    let series: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| (e - t).norm()).collect();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Ok(AbsoluteError { mean, series })
}

pub fn evaluate(
    estimate: &[EcefVector],
    truth: &[EcefVector],
    method_label: impl Into<String>,
) -> Result<EvaluationReport, EvalError> {
    let rpe = compute_rpe(estimate, truth)?;
    let ape = compute_ape(estimate, truth)?;
    Ok(EvaluationReport {
        method_label: method_label.into(),
        epochs: estimate.len(),
        rpe_mean: rpe.mean,
        rpe_max: rpe.max,
        ape_mean: ape.mean,
        rpe_series: rpe.series,
        ape_series: ape.series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn path(n: usize) -> Vec<EcefVector> {
        (0..n).map(|i| Vector3::new(-3.9e6 + i as f64, 3.3e6 - 0.5 * i as f64, 3.7e6 + (i as f64).sin())).collect()
    }

    #[test]
    fn identical_is_zero() {
        let t = path(20);
        let r = evaluate(&t, &t, "x").unwrap();
        assert_eq!((r.rpe_mean, r.rpe_max, r.ape_mean), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_offset() {
        let t = path(20);
        let e: Vec<_> = t.iter().map(|p| p + Vector3::new(1.0, 0.0, 0.0)).collect();
        let rpe = compute_rpe(&e, &t).unwrap();
        assert!(rpe.series.iter().all(|v| *v == 0.0));
        assert!((compute_ape(&e, &t).unwrap().mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_drift() {
        let t: Vec<EcefVector> = (0..50).map(|i| Vector3::new(0.0, i as f64, 0.0)).collect();
        let d = 0.01;
        let e: Vec<_> = t.iter().enumerate().map(|(i, p)| p + Vector3::new(d * i as f64, 0.0, 0.0)).collect();
        let rpe = compute_rpe(&e, &t).unwrap();
        for (i, v) in rpe.series.iter().enumerate() {
            assert!((v - d * i as f64).abs() < 1e-12);
        }
        assert!((rpe.max - 0.49).abs() < 1e-12);
        assert!((rpe.mean - 0.25).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(compute_rpe(&path(3), &path(4)).unwrap_err(), EvalError::LengthMismatch { estimate: 3, truth: 4 });
        assert!(compute_ape(&path(2), &path(1)).is_err());
        assert!(matches!(compute_rpe(&path(1), &path(1)), Err(EvalError::TooShort { .. })));
    }

    proptest! {
        #[test]
        fn rpe_ignores_common_translation(
            seed in prop::collection::vec(-5.0f64..5.0, 30),
            shift in prop::array::uniform3(-1e3f64..1e3),
        ) {
            let t = path(10);
            let e: Vec<EcefVector> = t.iter().enumerate()
                .map(|(i, p)| p + Vector3::new(seed[3 * i], seed[3 * i + 1], seed[3 * i + 2]))
                .collect();
            let moved: Vec<EcefVector> = e.iter().map(|p| p + Vector3::from(shift)).collect();
            let a = compute_rpe(&e, &t).unwrap();
            let b = compute_rpe(&moved, &t).unwrap();
            for (x, y) in a.series.iter().zip(&b.series) {
                prop_assert!((x - y).abs() < 1e-6);
            }
            prop_assert!(a.max >= a.mean && a.mean >= 0.0);
        }

        #[test]
        fn ape_matches_recomputation(seed in prop::collection::vec(-5.0f64..5.0, 30)) {
            let t = path(10);
            let e: Vec<EcefVector> = t.iter().enumerate()
                .map(|(i, p)| p + Vector3::new(seed[3 * i], seed[3 * i + 1], seed[3 * i + 2]))
                .collect();
            let ape = compute_ape(&e, &t).unwrap();
            let mut sum = 0.0;
            for i in 0..10 {
                let d = [seed[3 * i], seed[3 * i + 1], seed[3 * i + 2]];
                sum += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            }
            prop_assert!((ape.mean - sum / 10.0).abs() < 1e-6);
        }
    }
}
