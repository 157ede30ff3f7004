//! Powell's dogleg on the sparse normal equations of the graph.

use std::collections::BTreeSet;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::factors::{StateVector, Vector7, STATE_DIM};
use super::sparse::{minimum_degree_ordering, SparseCholesky, SparseSymmetric};
use super::{evaluate_cost, Graph, GraphError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the cost by less than this fraction.
    pub relative_tolerance: f64,
    /// Stop when the cost gradient's largest component falls below this.
    pub gradient_tolerance: f64,
    /// Initial trust radius (m).
    pub initial_radius: f64,
    pub max_radius: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_tolerance: 1e-8,
            gradient_tolerance: 1e-6,
            initial_radius: 10.0,
            max_radius: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Iterations attempted, including rejected steps.
    pub iterations: usize,
    pub converged: bool,
    /// Initial cost followed by the cost after every accepted step.
    pub costs: Vec<f64>,
    pub relinearizations: usize,
}

struct System {
    hessian: SparseSymmetric,
    /// `Jᵀ Ω e`, half the cost gradient.
    gradient: Vec<f64>,
}

fn accumulate<const R: usize>(
    system: &mut System,
    blocks: &[(usize, SMatrix<f64, R, STATE_DIM>)],
    residual: &SVector<f64, R>,
    omega: &SMatrix<f64, R, R>,
) {
    for (a, ja) in blocks {
        let wa = ja.transpose() * omega;
        let g = wa * residual;
        for r in 0..STATE_DIM {
            system.gradient[a * STATE_DIM + r] += g[r];
        }
        for (b, jb) in blocks {
            if b > a {
                continue;
            }
            let h = wa * jb;
            for r in 0..STATE_DIM {
                for c in 0..STATE_DIM {
                    let (i, j) = (a * STATE_DIM + r, b * STATE_DIM + c);
                    if h[(r, c)] != 0.0 && (a != b || r >= c) {
                        system.hessian.add(i, j, h[(r, c)]);
                    }
                }
            }
        }
    }
}

fn states_from(x: &[f64]) -> Vec<StateVector> {
    x.chunks_exact(STATE_DIM).map(|c| StateVector::from_vector(&Vector7::from_column_slice(c))).collect()
}

fn assemble(graph: &Graph, states: &[StateVector]) -> System {
    let dim = states.len() * STATE_DIM;
    let mut s = System { hessian: SparseSymmetric::new(dim), gradient: vec![0.0; dim] };
    for f in &graph.velocity_factors {
        let (ji, jj) = f.jacobians();
        let e = f.residual(&states[f.node_i], &states[f.node_j]);
        accumulate(&mut s, &[(f.node_i, ji), (f.node_j, jj)], &e, &f.information);
    }
    for f in &graph.trrtk_factors {
        let (jp, jc) = f.jacobians();
        let e = f.residual(&states[f.node_past], &states[f.node_current]);
        accumulate(&mut s, &[(f.node_past, jp), (f.node_current, jc)], &e, &f.information);
    }
    for f in &graph.pseudorange_factors {
        let e = SVector::<f64, 1>::new(f.residual(&states[f.node]));
        accumulate(&mut s, &[(f.node, f.jacobian())], &e, &SMatrix::<f64, 1, 1>::new(f.information));
    }
    for p in &graph.priors {
        let mut j = SMatrix::<f64, 1, STATE_DIM>::zeros();
        j[p.dim] = 1.0;
        let e = SVector::<f64, 1>::new(p.residual(&states[p.node]));
        accumulate(&mut s, &[(p.node, j)], &e, &SMatrix::<f64, 1, 1>::new(p.information()));
    }
    s
}

/// Elimination order: minimum degree over nodes, each node's seven
/// components kept together.
fn ordering(graph: &Graph) -> Vec<usize> {
    let n = graph.nodes.len();
    let mut adj = vec![BTreeSet::new(); n];
    let mut link = |a: usize, b: usize| {
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    };
    for f in &graph.velocity_factors {
        link(f.node_i, f.node_j);
    }
    for f in &graph.trrtk_factors {
        link(f.node_past, f.node_current);
    }
    minimum_degree_ordering(&adj)
        .into_iter()
        .flat_map(|node| (0..STATE_DIM).map(move |k| node * STATE_DIM + k))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes the graph cost from the graph's initial node values.
///
/// A non-converged run is not an error: the report carries
/// `converged = false` together with the best states found.
pub fn optimize(graph: &Graph, config: &OptimizerConfig) -> Result<(Vec<StateVector>, OptimizerReport), GraphError> {
    let mut work = graph.clone();
    let order = ordering(graph);
    let mut x: Vec<f64> = graph.nodes.iter().flat_map(|s| s.to_vector().iter().copied().collect::<Vec<_>>()).collect();
    let mut cost = evaluate_cost(&work, &states_from(&x));
    let initial_cost = cost;
    let mut costs = vec![cost];
    let mut radius = config.initial_radius;
    let mut converged = cost == 0.0;
    let mut iterations = 0;
    let mut relinearizations = 0;
    let mut cached: Option<(System, Vec<f64>)> = None;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        if cached.is_none() {
            let system = assemble(&work, &states_from(&x));
            let grad_inf = system.gradient.iter().fold(0.0f64, |m, v| m.max(2.0 * v.abs()));
            if grad_inf < config.gradient_tolerance {
                converged = true;
                break;
            }
            let chol =
                SparseCholesky::factor(&system.hessian, &order).map_err(|_| GraphError::SingularNormalEquations)?;
            let gauss_newton: Vec<f64> = chol.solve(&system.gradient).into_iter().map(|v| -v).collect();
            cached = Some((system, gauss_newton));
        }
        let (system, gauss_newton) = cached.as_ref().expect("system assembled above");
        let g = &system.gradient;
        let step = dogleg_step(system, gauss_newton, radius);
        let h_step = system.hessian.mul_vec(&step);
        let predicted = -(2.0 * dot(g, &step) + dot(&step, &h_step));
        let candidate: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let new_cost = evaluate_cost(&work, &states_from(&candidate));
        let step_norm = norm(&step);

        if !(predicted > 0.0) || !new_cost.is_finite() {
            if step_norm <= 1e-12 * (norm(&x) + 1e-12) {
                converged = true;
            } else {
                radius *= 0.25;
            }
            continue;
        }
        let gain = (cost - new_cost) / predicted;
        if new_cost < cost {
            let relative = (cost - new_cost) / cost;
            x = candidate;
            cost = new_cost;
            costs.push(cost);
            cached = None;
            if gain > 0.75 {
                radius = (2.0 * radius).max(2.0 * step_norm).min(config.max_radius);
            }
            let states = states_from(&x);
            let mut moved = 0;
            for f in &mut work.pseudorange_factors {
                if f.relinearize(
                    &graph.origin,
                    &states[f.node].position_offset,
                    &graph.models,
                    graph.relinearization_threshold,
                ) {
                    moved += 1;
                }
            }
            if moved > 0 {
                relinearizations += 1;
                log::debug!("relinearized {moved} pseudorange rows");
                cost = evaluate_cost(&work, &states);
            } else if relative < config.relative_tolerance {
                converged = true;
            }
        } else {
            radius *= 0.25;
            if step_norm <= 1e-12 * (norm(&x) + 1e-12) {
                converged = true;
            }
        }
        log::trace!("iteration {iterations}: cost {cost:.6e}, radius {radius:.3e}, gain {gain:.3}");
    }

    let report = OptimizerReport { initial_cost, final_cost: cost, iterations, converged, costs, relinearizations };
    if !converged {
        log::warn!("optimizer stopped after {iterations} iterations without converging");
    }
    Ok((states_from(&x), report))
}

/// Gauss-Newton step if it fits the trust region, otherwise the blend of
/// the Cauchy point and the Gauss-Newton step that reaches the boundary.
fn dogleg_step(system: &System, gauss_newton: &[f64], radius: f64) -> Vec<f64> {
    if norm(gauss_newton) <= radius {
        return gauss_newton.to_vec();
    }
    let g = &system.gradient;
    let g_norm = norm(g);
    let hg = system.hessian.mul_vec(g);
    let curvature = dot(g, &hg);
    let alpha = if curvature > 0.0 { dot(g, g) / curvature } else { f64::INFINITY };
    if alpha * g_norm >= radius {
        return g.iter().map(|v| -v * radius / g_norm).collect();
    }
    let sd: Vec<f64> = g.iter().map(|v| -alpha * v).collect();
    let diff: Vec<f64> = gauss_newton.iter().zip(&sd).map(|(a, b)| a - b).collect();
    // Solve |sd + β·diff| = radius for β in [0, 1].
    let a = dot(&diff, &diff);
    let b = 2.0 * dot(&sd, &diff);
    let c = dot(&sd, &sd) - radius * radius;
    let beta = if a > 0.0 { ((-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)).clamp(0.0, 1.0) } else { 0.0 };
    sd.iter().zip(&diff).map(|(s, d)| s + beta * d).collect()
}
