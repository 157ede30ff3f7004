//! Graph export for external plotting and inspection.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::gnss::SatelliteId;
use crate::graph::{Graph, OptimizerReport, Prior, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Velocity,
    Trrtk,
    Pseudorange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub index: usize,
    pub week: i32,
    pub tow: f64,
    /// ECEF (m).
    pub position: [f64; 3],
    /// GPS receiver clock, then GLONASS, Galileo and BeiDou offsets (m).
    pub clocks: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeExport {
    #[serde(rename = "type")]
    pub kind: EdgeKind,
    pub nodes: Vec<usize>,
    /// Displacement (m) for velocity and loop-closure edges, pseudorange (m) otherwise.
    pub measurement: Vec<f64>,
    /// Ascending.
    pub information_eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_difference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub satellite: Option<SatelliteId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub origin: [f64; 3],
    /// Loop-closure window the graph was built with (s).
    #[serde(default)]
    pub trrtk_window: Option<f64>,
    pub nodes: Vec<NodeExport>,
    pub edges: Vec<EdgeExport>,
    #[serde(default)]
    pub priors: Vec<Prior>,
    #[serde(default)]
    pub report: Option<OptimizerReport>,
}

fn eigenvalues(m: &Matrix3<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

impl GraphExport {
    /// Nodes carry `states` (for example the optimized solution).
    pub fn new(graph: &Graph, states: &[StateVector]) -> Self {
        let nodes = states
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let p = graph.position(s);
                let (week, tow) = graph.times.get(index).map_or((0, 0.0), |t| (t.week, t.tow));
                NodeExport { index, week, tow, position: [p.x, p.y, p.z], clocks: s.clock_bias }
            })
            .collect();
        let mut edges = Vec::new();
        for f in &graph.velocity_factors {
            let d = f.measured_velocity * f.dt;
            edges.push(EdgeExport {
                kind: EdgeKind::Velocity,
                nodes: vec![f.node_i, f.node_j],
                measurement: d.iter().copied().collect(),
                information_eigenvalues: eigenvalues(&f.information),
                time_difference: Some(f.dt),
                satellite: None,
            });
        }
        for f in &graph.trrtk_factors {
            edges.push(EdgeExport {
                kind: EdgeKind::Trrtk,
                nodes: vec![f.node_past, f.node_current],
                measurement: f.baseline.iter().copied().collect(),
                information_eigenvalues: eigenvalues(&f.information),
                time_difference: Some(f.time_difference),
                satellite: None,
            });
        }
        for f in &graph.pseudorange_factors {
            edges.push(EdgeExport {
                kind: EdgeKind::Pseudorange,
                nodes: vec![f.node],
                measurement: vec![f.pseudorange],
                information_eigenvalues: vec![f.information],
                time_difference: None,
                satellite: Some(f.sat),
            });
        }
        Self {
            origin: [graph.origin.x, graph.origin.y, graph.origin.z],
            trrtk_window: None,
            nodes,
            edges,
            priors: graph.priors.clone(),
            report: None,
        }
    }

    pub fn edge_counts(&self) -> BTreeMap<EdgeKind, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.edges {
            *counts.entry(e.kind).or_insert(0) += 1;
        }
        counts
    }
}

pub fn write_graph_json(export: &GraphExport, out: impl Write) -> Result<(), IoError> {
    serde_json::to_writer_pretty(out, export)?;
    Ok(())
}

pub fn read_graph_json(input: impl Read) -> Result<GraphExport, IoError> {
    Ok(serde_json::from_reader(input)?)
}
