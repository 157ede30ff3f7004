//! Trajectory factor graph: velocity edges, carrier-phase loop closures and
//! pseudorange rows over per-epoch position and clock states.

mod factors;
mod optimizer;
pub mod sparse;

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{KlobucharParams, TropoModel};
use crate::estimation::{EstimationConfig, SatelliteStates, SppSolution, VelocitySolution};
use crate::gnss::{Constellation, EcefVector, Epoch, GpsTime};
use crate::trrtk::TrRtkResult;

pub use factors::{
    DelayModels, Jacobian3, Prior, PseudorangeFactor, StateVector, TrRtkFactor, Vector7, VelocityFactor, STATE_DIM,
};
pub use optimizer::{optimize, OptimizerConfig, OptimizerReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("no epochs to build a graph from")]
    EmptyInput,
    #[error("no velocity available around epoch {epoch}")]
    MissingVelocity { epoch: usize },
    #[error("input lengths differ: {what}")]
    LengthMismatch { what: String },
    #[error("no epoch has a single point solution to anchor the graph")]
    NoPositionFix,
    #[error("factor references node {node} but the graph has {nodes} nodes")]
    InvalidNode { node: usize, nodes: usize },
    #[error("normal equations are singular")]
    SingularNormalEquations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    /// Position prior on the first node (m, per axis).
    pub anchor_sigma: f64,
    /// Prior on clock terms that no pseudorange observes (m).
    pub clock_prior_sigma: f64,
    /// Node displacement that triggers rebuilding pseudorange rows (m).
    pub relinearization_threshold: f64,
    pub use_pseudorange: bool,
    /// Known ECEF start position; replaces the single point anchor when set.
    pub known_start: Option<[f64; 3]>,
    pub known_start_sigma: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            anchor_sigma: 2.0,
            clock_prior_sigma: 100.0,
            relinearization_threshold: 10.0,
            use_pseudorange: true,
            known_start: None,
            known_start_sigma: 0.05,
        }
    }
}

/// Everything `build_graph` consumes, indexed by epoch.
#[derive(Debug, Clone, Copy)]
pub struct GraphInput<'a> {
    pub epochs: &'a [Epoch],
    pub satellites: &'a [SatelliteStates],
    pub velocities: &'a [Option<VelocitySolution>],
    pub spp: &'a [Option<SppSolution>],
    /// `(past index, current index, result)`.
    pub trrtk: &'a [(usize, usize, TrRtkResult)],
    pub iono: &'a KlobucharParams,
    pub tropo: &'a TropoModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    /// ECEF point that node offsets are relative to.
    pub origin: EcefVector,
    pub times: Vec<GpsTime>,
    /// Initial values.
    pub nodes: Vec<StateVector>,
    pub velocity_factors: Vec<VelocityFactor>,
    pub trrtk_factors: Vec<TrRtkFactor>,
    pub pseudorange_factors: Vec<PseudorangeFactor>,
    pub priors: Vec<Prior>,
    pub models: DelayModels,
    pub relinearization_threshold: f64,
}

/// Cost split by factor type.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub velocity: f64,
    pub trrtk: f64,
    pub pseudorange: f64,
    pub prior: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.velocity + self.trrtk + self.pseudorange + self.prior
    }
}

fn quadratic(e: &Vector3<f64>, omega: &Matrix3<f64>) -> f64 {
    (e.transpose() * omega * e)[0]
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Absolute ECEF position of a node state.
    pub fn position(&self, state: &StateVector) -> EcefVector {
        self.origin + state.position_offset
    }

    /// Checks that every factor references an existing node and that the
    /// velocity chain connects all nodes.
    pub fn validate(&self) -> Result<(), GraphError> {
        let nodes = self.nodes.len();
        let check = |node: usize| {
            if node < nodes {
                Ok(())
            } else {
                Err(GraphError::InvalidNode { node, nodes })
            }
        };
        let mut chained = vec![false; nodes.saturating_sub(1)];
        for f in &self.velocity_factors {
            check(f.node_i)?;
            check(f.node_j)?;
            if f.node_j == f.node_i + 1 {
                chained[f.node_i] = true;
            }
        }
        for f in &self.trrtk_factors {
            check(f.node_past)?;
            check(f.node_current)?;
        }
        for f in &self.pseudorange_factors {
            check(f.node)?;
        }
        for p in &self.priors {
            check(p.node)?;
        }
        match chained.iter().position(|c| !c) {
            Some(epoch) => Err(GraphError::MissingVelocity { epoch }),
            None => Ok(()),
        }
    }

    pub fn cost_breakdown(&self, states: &[StateVector]) -> CostBreakdown {
        let mut c = CostBreakdown::default();
        for f in &self.velocity_factors {
            c.velocity += quadratic(&f.residual(&states[f.node_i], &states[f.node_j]), &f.information);
        }
        for f in &self.trrtk_factors {
            c.trrtk += quadratic(&f.residual(&states[f.node_past], &states[f.node_current]), &f.information);
        }
        for f in &self.pseudorange_factors {
            let e = f.residual(&states[f.node]);
            c.pseudorange += e * e * f.information;
        }
        for p in &self.priors {
            let e = p.residual(&states[p.node]);
            c.prior += e * e * p.information();
        }
        c
    }

    /// Per-factor contributions in the order velocity, loop closure,
    /// pseudorange, prior.
    pub fn factor_costs(&self, states: &[StateVector]) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(
            self.velocity_factors
                .iter()
                .map(|f| quadratic(&f.residual(&states[f.node_i], &states[f.node_j]), &f.information)),
        );
        out.extend(
            self.trrtk_factors
                .iter()
                .map(|f| quadratic(&f.residual(&states[f.node_past], &states[f.node_current]), &f.information)),
        );
        out.extend(self.pseudorange_factors.iter().map(|f| {
            let e = f.residual(&states[f.node]);
            e * e * f.information
        }));
        out.extend(self.priors.iter().map(|p| {
            let e = p.residual(&states[p.node]);
            e * e * p.information()
        }));
        out
    }
}

/// Sum of `eᵀΩe` over all factors and priors.
pub fn evaluate_cost(graph: &Graph, states: &[StateVector]) -> f64 {
    graph.cost_breakdown(states).total()
}

fn velocity_mean(
    velocities: &[Option<VelocitySolution>],
    i: usize,
    floor: f64,
) -> Option<(Vector3<f64>, Matrix3<f64>)> {
    let a = velocities.get(i).and_then(Option::as_ref);
    let b = velocities.get(i + 1).and_then(Option::as_ref);
    match (a, b) {
        (Some(a), Some(b)) => {
            Some(((a.velocity + b.velocity) * 0.5, (a.floored_covariance(floor) + b.floored_covariance(floor)) * 0.5))
        }
        (Some(v), None) | (None, Some(v)) => Some((v.velocity, v.floored_covariance(floor))),
        (None, None) => None,
    }
}

/// Assembles nodes, factors and priors. Initial positions integrate the
/// velocities from the first single point fix; initial clocks come from the
/// per-epoch single point solutions.
pub fn build_graph(
    input: &GraphInput<'_>,
    config: &GraphConfig,
    estimation: &EstimationConfig,
) -> Result<Graph, GraphError> {
    let n = input.epochs.len();
    if n == 0 {
        return Err(GraphError::EmptyInput);
    }
    for (what, len) in
        [("satellites", input.satellites.len()), ("velocities", input.velocities.len()), ("spp", input.spp.len())]
    {
        if len != n {
            return Err(GraphError::LengthMismatch { what: format!("{what}: {len} vs {n} epochs") });
        }
    }
    let times: Vec<GpsTime> = input.epochs.iter().map(|e| e.time).collect();
    let floor = estimation.velocity_sigma_floor;

    let mut velocity_factors = Vec::with_capacity(n.saturating_sub(1));
    let mut cumulative = vec![Vector3::zeros(); n];
    for i in 0..n.saturating_sub(1) {
        let (v, cov) = velocity_mean(input.velocities, i, floor).ok_or(GraphError::MissingVelocity { epoch: i })?;
        let dt = times[i + 1].diff(&times[i]);
        let information = (cov * (dt * dt)).try_inverse().ok_or(GraphError::MissingVelocity { epoch: i })?;
        cumulative[i + 1] = cumulative[i] + v * dt;
        velocity_factors.push(VelocityFactor {
            node_i: i,
            node_j: i + 1,
            measured_velocity: v,
            dt,
            information: (information + information.transpose()) * 0.5,
        });
    }

    let first = input.spp.iter().position(Option::is_some);
    let origin = match (config.known_start, first) {
        (Some(p), _) => Vector3::new(p[0], p[1], p[2]),
        (None, Some(k)) => input.spp[k].as_ref().map(|s| s.position).unwrap_or_default() - cumulative[k],
        (None, None) => return Err(GraphError::NoPositionFix),
    };
    if first.is_none() {
        log::warn!("no single point solution; anchoring at the configured start");
    }

    let mut nodes = Vec::with_capacity(n);
    let mut clocks = [0.0; 4];
    for (i, offset) in cumulative.iter().enumerate() {
        if let Some(spp) = &input.spp[i] {
            for (c, v) in &spp.clock_biases {
                clocks[c.index()] = *v;
            }
        }
        nodes.push(StateVector { position_offset: *offset, clock_bias: clocks });
    }

    let mut trrtk_factors = Vec::new();
    for (past, current, result) in input.trrtk {
        if !result.is_edge() {
            continue;
        }
        for node in [*past, *current] {
            if node >= n {
                return Err(GraphError::InvalidNode { node, nodes: n });
            }
        }
        let Some(information) = result.covariance.try_inverse() else {
            log::warn!("skipping loop closure {past} -> {current} with singular covariance");
            continue;
        };
        let (a, b, baseline) =
            if past < current { (*past, *current, result.baseline) } else { (*current, *past, -result.baseline) };
        trrtk_factors.push(TrRtkFactor {
            node_past: a,
            node_current: b,
            baseline,
            information: (information + information.transpose()) * 0.5,
            time_difference: times[b].diff(&times[a]),
        });
    }

    let models = DelayModels { iono: *input.iono, tropo: *input.tropo };
    let mut pseudorange_factors = Vec::new();
    let mut observed = vec![BTreeSet::new(); n];
    if config.use_pseudorange {
        for (i, epoch) in input.epochs.iter().enumerate() {
            for obs in &epoch.observations {
                let Some(sat) = input.satellites[i].get(&obs.sat) else {
                    continue;
                };
                let factor = PseudorangeFactor::new(
                    i,
                    epoch.time,
                    obs.sat,
                    *sat,
                    obs.pseudorange,
                    &origin,
                    &nodes[i].position_offset,
                    &models,
                    estimation.elevation_mask(),
                    |el| estimation.pseudorange_variance(el),
                );
                if let Some(f) = factor {
                    observed[i].insert(obs.sat.constellation);
                    pseudorange_factors.push(f);
                }
            }
        }
    }

    let mut priors = Vec::new();
    let (anchor_sigma, anchor) = match config.known_start {
        Some(_) => (config.known_start_sigma, Vector3::zeros()),
        None => (config.anchor_sigma, nodes[0].position_offset),
    };
    for dim in 0..3 {
        priors.push(Prior { node: 0, dim, mean: anchor[dim], sigma: anchor_sigma });
    }
    for (i, seen) in observed.iter().enumerate() {
        for c in Constellation::ALL {
            if !seen.contains(&c) {
                priors.push(Prior {
                    node: i,
                    dim: 3 + c.index(),
                    mean: nodes[i].clock(c),
                    sigma: config.clock_prior_sigma,
                });
            }
        }
    }

    let graph = Graph {
        origin,
        times,
        nodes,
        velocity_factors,
        trrtk_factors,
        pseudorange_factors,
        priors,
        models,
        relinearization_threshold: config.relinearization_threshold,
    };
    graph.validate()?;
    log::info!(
        "graph: {} nodes, {} velocity, {} loop closure, {} pseudorange factors, {} priors",
        graph.nodes.len(),
        graph.velocity_factors.len(),
        graph.trrtk_factors.len(),
        graph.pseudorange_factors.len(),
        graph.priors.len()
    );
    Ok(graph)
}
