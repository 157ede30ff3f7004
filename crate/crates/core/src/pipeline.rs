//! End-to-end trajectory solution: single point fixes and Doppler
//! velocities, a first graph pass, carrier-phase loop closures, and the
//! final joint optimization.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{KlobucharParams, TropoModel};
use crate::estimation::{
    solve_doppler_velocity, solve_spp, EstimationConfig, SatelliteStates, SppSolution, VelocitySolution,
};
use crate::gnss::{EcefVector, Epoch, GpsTime};
use crate::graph::{
    build_graph, optimize, Graph, GraphConfig, GraphError, GraphInput, OptimizerConfig, OptimizerReport, StateVector,
};
use crate::trrtk::{
    candidate_pairs, estimate_baseline, Corrections, EpochContext, PriorChain, TrRtkConfig, TrRtkResult, TrRtkStatus,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("epochs and satellite states differ in length ({epochs} vs {satellites})")]
    LengthMismatch { epochs: usize, satellites: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub estimation: EstimationConfig,
    pub trrtk: TrRtkConfig,
    pub graph: GraphConfig,
    pub optimizer: OptimizerConfig,
    pub use_trrtk: bool,
    /// Loop-closure rounds; each later round linearizes at the previous solution.
    pub loop_closure_passes: usize,
    /// Unmodeled acceleration allowance for integrated-velocity priors (m/s).
    pub prior_process_sigma: f64,
    /// Matching tolerance for pair time differences (s).
    pub pair_tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            estimation: EstimationConfig::default(),
            trrtk: TrRtkConfig::default(),
            graph: GraphConfig::default(),
            optimizer: OptimizerConfig::default(),
            use_trrtk: true,
            loop_closure_passes: 2,
            prior_process_sigma: 0.01,
            pair_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineInput<'a> {
    pub epochs: &'a [Epoch],
    pub satellites: &'a [SatelliteStates],
    pub iono: &'a KlobucharParams,
    pub tropo: &'a TropoModel,
}

/// Loop-closure attempts and fixes for one time difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FixCounts {
    pub attempted: usize,
    pub fixed: usize,
    pub rejected: usize,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub times: Vec<GpsTime>,
    pub spp: Vec<Option<SppSolution>>,
    pub velocities: Vec<Option<VelocitySolution>>,
    /// Loop-closure attempts that produced a result, as `(past, current, result)`.
    pub trrtk: Vec<(usize, usize, TrRtkResult)>,
    /// Keyed by time difference in whole seconds.
    pub fix_histogram: BTreeMap<u64, FixCounts>,
    pub graph: Graph,
    pub states: Vec<StateVector>,
    pub report: OptimizerReport,
    /// Optimized ECEF positions.
    pub positions: Vec<EcefVector>,
    /// Initial (velocity-integrated) ECEF positions.
    pub initial_positions: Vec<EcefVector>,
}

impl PipelineOutput {
    pub fn fix_totals(&self) -> FixCounts {
        self.fix_histogram.values().fold(FixCounts::default(), |a, c| FixCounts {
            attempted: a.attempted + c.attempted,
            fixed: a.fixed + c.fixed,
            rejected: a.rejected + c.rejected,
            failed: a.failed + c.failed,
        })
    }
}

/// Runs the complete solution.
pub fn run_pipeline(input: &PipelineInput<'_>, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let n = input.epochs.len();
    if input.satellites.len() != n {
        return Err(PipelineError::LengthMismatch { epochs: n, satellites: input.satellites.len() });
    }
    if n == 0 {
        return Err(GraphError::EmptyInput.into());
    }
    let times: Vec<GpsTime> = input.epochs.iter().map(|e| e.time).collect();
    let est = &config.estimation;

    let spp: Vec<Option<SppSolution>> = (0..n)
        .into_par_iter()
        .map(|k| {
            solve_spp(&input.epochs[k], &input.satellites[k], input.iono, input.tropo, est, None)
                .map_err(|e| log::warn!("epoch {k}: no position fix: {e}"))
                .ok()
        })
        .collect();
    let velocities: Vec<Option<VelocitySolution>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let position = spp[k].as_ref()?.position;
            solve_doppler_velocity(&input.epochs[k], &input.satellites[k], &position, est)
                .map_err(|e| log::warn!("epoch {k}: no velocity: {e}"))
                .ok()
        })
        .collect();

    let graph_input = |trrtk: &[(usize, usize, TrRtkResult)]| -> Result<Graph, GraphError> {
        build_graph(
            &GraphInput {
                epochs: input.epochs,
                satellites: input.satellites,
                velocities: &velocities,
                spp: &spp,
                trrtk,
                iono: input.iono,
                tropo: input.tropo,
            },
            &config.graph,
            est,
        )
    };

    let mut trrtk = Vec::new();
    let mut fix_histogram = BTreeMap::new();
    let mut graph = graph_input(&trrtk)?;
    let (mut states, mut report) = optimize(&graph, &config.optimizer)?;
    log::info!(
        "without loop closures: cost {:.3} -> {:.3} in {} iterations",
        report.initial_cost,
        report.final_cost,
        report.iterations
    );
    let passes = if config.use_trrtk { config.loop_closure_passes } else { 0 };
    for pass in 0..passes {
        let positions: Vec<EcefVector> = states.iter().map(|s| graph.position(s)).collect();
        (trrtk, fix_histogram) = resolve_loop_closures(input, &times, &velocities, &positions, config);
        graph = graph_input(&trrtk)?;
        (states, report) = optimize(&graph, &config.optimizer)?;
        log::info!(
            "pass {}: cost {:.3} -> {:.3} in {} iterations (converged: {})",
            pass + 1,
            report.initial_cost,
            report.final_cost,
            report.iterations,
            report.converged
        );
    }
    let positions = states.iter().map(|s| graph.position(s)).collect();
    let initial_positions = graph.nodes.iter().map(|s| graph.position(s)).collect();
    Ok(PipelineOutput {
        times,
        spp,
        velocities,
        trrtk,
        fix_histogram,
        graph,
        states,
        report,
        positions,
        initial_positions,
    })
}

type Resolved = (Vec<(usize, usize, TrRtkResult)>, BTreeMap<u64, FixCounts>);

/// Attempts every lattice pair, shortest time differences first, so that
/// longer pairs can chain the already fixed shorter ones into their prior.
fn resolve_loop_closures(
    input: &PipelineInput<'_>,
    times: &[GpsTime],
    velocities: &[Option<VelocitySolution>],
    positions: &[EcefVector],
    config: &PipelineConfig,
) -> Resolved {
    let tcfg = &config.trrtk;
    // Epochs without a velocity get an uninformative one.
    let vel: Vec<Vector3<f64>> =
        velocities.iter().map(|v| v.as_ref().map_or(Vector3::zeros(), |v| v.velocity)).collect();
    let cov: Vec<Matrix3<f64>> = velocities
        .iter()
        .map(|v| match v {
            Some(v) => v.floored_covariance(config.estimation.velocity_sigma_floor),
            None => Matrix3::identity() * 1e4,
        })
        .collect();
    let mut chain = PriorChain::new(times, &vel, &cov, config.prior_process_sigma);

    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (a, b) in candidate_pairs(times, &tcfg.candidate_lattice, tcfg.max_time_difference, config.pair_tolerance) {
        groups.entry(b - a).or_default().push((a, b));
    }
    let mut by_span: Vec<Vec<(usize, usize)>> = groups.into_values().collect();
    by_span.sort_by(|x, y| {
        let span = |p: &Vec<(usize, usize)>| times[p[0].1].diff(&times[p[0].0]);
        span(x).total_cmp(&span(y))
    });

    let corrections = Corrections { iono: input.iono, tropo: input.tropo };
    let ctx = |k: usize| EpochContext {
        index: k,
        epoch: &input.epochs[k],
        satellites: &input.satellites[k],
        position: positions[k],
    };
    let mut results = Vec::new();
    let mut histogram: BTreeMap<u64, FixCounts> = BTreeMap::new();
    for pairs in by_span {
        let outcomes: Vec<_> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let prior = chain.prior(a, b);
                (a, b, estimate_baseline(&ctx(a), &ctx(b), &corrections, prior.as_ref(), tcfg))
            })
            .collect();
        for (a, b, outcome) in outcomes {
            let key = times[b].diff(&times[a]).round().max(0.0) as u64;
            let counts = histogram.entry(key).or_default();
            counts.attempted += 1;
            match outcome {
                Ok(r) => {
                    match r.status {
                        TrRtkStatus::Fixed => counts.fixed += 1,
                        _ => counts.rejected += 1,
                    }
                    chain.insert(a, b, &r);
                    results.push((a, b, r));
                }
                Err(e) => {
                    counts.failed += 1;
                    log::debug!("pair {a} -> {b}: {e}");
                }
            }
        }
    }
    let fixed: usize = histogram.values().map(|c| c.fixed).sum();
    let attempted: usize = histogram.values().map(|c| c.attempted).sum();
    log::info!("loop closures: {fixed} of {attempted} pairs fixed");
    (results, histogram)
}
