use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use super::{BaselinePrior, TrRtkResult};
use crate::gnss::GpsTime;

type Edge = (Vector3<f64>, Matrix3<f64>);

/// Baseline priors assembled from already fixed shorter baselines, with
/// integrated Doppler velocity bridging the gaps between them.
///
/// Resolving pairs in ascending time difference lets every long pair start
/// from a prior that is nearly as good as the short fixes it is built from.
#[derive(Debug, Clone)]
pub struct PriorChain<'a> {
    times: &'a [GpsTime],
    velocities: &'a [Vector3<f64>],
    covariances: &'a [Matrix3<f64>],
    process_sigma: f64,
    fixed: BTreeMap<usize, BTreeMap<usize, Edge>>,
}

impl<'a> PriorChain<'a> {
    /// `velocities` and `covariances` are indexed like `times`.
    pub fn new(
        times: &'a [GpsTime],
        velocities: &'a [Vector3<f64>],
        covariances: &'a [Matrix3<f64>],
        process_sigma: f64,
    ) -> Self {
        Self { times, velocities, covariances, process_sigma, fixed: BTreeMap::new() }
    }

    /// Records a result between epoch indices `past < current`; anything but
    /// a fixed solution is ignored.
    pub fn insert(&mut self, past: usize, current: usize, result: &TrRtkResult) {
        if !result.is_edge() || past >= current {
            return;
        }
        self.fixed.entry(past).or_default().insert(current, (result.baseline, result.covariance));
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed.values().map(BTreeMap::len).sum()
    }

    /// Prior for the displacement from epoch `past` to epoch `current`.
    /// Walks forward taking the longest fixed hop that does not overshoot,
    /// and integrates velocity wherever no hop starts.
    pub fn prior(&self, past: usize, current: usize) -> Option<BaselinePrior> {
        if past >= current || current >= self.times.len() {
            return None;
        }
        let mut baseline = Vector3::zeros();
        let mut covariance = Matrix3::zeros();
        let mut run_start: Option<usize> = None;
        let mut k = past;
        while k < current {
            let hop = self.fixed.get(&k).and_then(|hops| hops.range(..=current).next_back());
            match hop {
                Some((&j, (b, c))) => {
                    if let Some(s) = run_start.take() {
                        let seg = self.integrate(s, k)?;
                        baseline += seg.baseline;
                        covariance += seg.covariance;
                    }
                    baseline += b;
                    covariance += c;
                    k = j;
                }
                None => {
                    run_start.get_or_insert(k);
                    k += 1;
                }
            }
        }
        if let Some(s) = run_start {
            let seg = self.integrate(s, current)?;
            baseline += seg.baseline;
            covariance += seg.covariance;
        }
        Some(BaselinePrior { baseline, covariance })
    }

    fn integrate(&self, from: usize, to: usize) -> Option<BaselinePrior> {
        BaselinePrior::from_velocities(
            &self.times[from..=to],
            &self.velocities[from..=to],
            &self.covariances[from..=to],
            self.process_sigma,
        )
    }
}
