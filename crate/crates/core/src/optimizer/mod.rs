//! Exact solver for small instances: enumerate every tree topology with
//! bounded branching degree, relax each one geometrically and keep the best.

pub mod relax;
pub mod topology;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Edge, Flow, TransportInstance, Vertex};

pub use relax::{relax_geometry, RelaxOptions, Relaxation};
pub use topology::{enumerate_topologies, Topology, MAX_TERMINALS};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveOptions {
    pub relax: RelaxOptions,
    /// Extra relaxations per topology from seeded random layouts.
    pub random_restarts: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopologyCost {
    pub encoding: String,
    /// Branching degrees of the topology before relaxation, sorted.
    pub branching_degrees: Vec<usize>,
    /// One branching node joined to every terminal.
    pub is_star: bool,
    pub cost: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Branching degrees of the relaxed flow.
    pub histogram: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub best_flow: Flow,
    pub best_cost: f64,
    pub best_encoding: String,
    pub degree_histogram: BTreeMap<usize, usize>,
    pub per_topology: Vec<TopologyCost>,
    pub iterations: usize,
    pub converged: bool,
    pub max_degree: usize,
}

impl SolveReport {
    /// The relaxed single-star topology, when it was enumerated.
    pub fn star(&self) -> Option<&TopologyCost> {
        self.per_topology.iter().find(|t| t.is_star)
    }
}

/// Direct flows for instances with at most two terminals.
fn trivial(instance: &TransportInstance) -> Flow {
    let terms = instance.terminals();
    let vertices = terms
        .iter()
        .map(|t| Vertex::terminal(t.id.clone(), t.point.clone()))
        .collect();
    let edges = match terms.as_slice() {
        [a, b] if a.net < 0.0 => vec![Edge::new(a.id.clone(), b.id.clone(), -a.net)],
        [a, b] => vec![Edge::new(b.id.clone(), a.id.clone(), a.net)],
        _ => Vec::new(),
    };
    Flow::new(vertices, edges)
}

pub fn solve(instance: &TransportInstance, max_degree: usize) -> Result<SolveReport> {
    solve_with(instance, max_degree, &SolveOptions::default())
}

/// Best flow over all topologies whose branching nodes have degree at most
/// `max_degree` (clamped to the terminal count).
pub fn solve_with(instance: &TransportInstance, max_degree: usize, opts: &SolveOptions) -> Result<SolveReport> {
    if max_degree < 3 {
        return Err(Error::invalid(format!(
            "maximum degree must be at least 3, got {max_degree}"
        )));
    }
    let n = instance.terminals().len();
    if n > MAX_TERMINALS {
        return Err(Error::GuardExceeded {
            what: "terminal count for the exact solver",
            limit: MAX_TERMINALS,
            got: n,
        });
    }
    if n <= 2 {
        let flow = trivial(instance);
        let cost = crate::model::edge_costs(&flow, instance.cost()).total;
        return Ok(SolveReport {
            degree_histogram: flow.branching_degree_histogram(),
            best_flow: flow,
            best_cost: cost,
            best_encoding: String::new(),
            per_topology: Vec::new(),
            iterations: 0,
            converged: true,
            max_degree,
        });
    }
    let max_degree = max_degree.min(n);
    let topologies = enumerate_topologies(n, max_degree)?;
    let results: Vec<(TopologyCost, Relaxation)> = topologies
        .par_iter()
        .map(|t| -> Result<(TopologyCost, Relaxation)> {
            let mut best = relax_geometry(instance, t, &opts.relax)?;
            for r in 0..opts.random_restarts {
                let seeded = RelaxOptions {
                    random_start: Some(opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64)),
                    ..opts.relax.clone()
                };
                let cand = relax_geometry(instance, t, &seeded)?;
                if cand.cost < best.cost {
                    best = cand;
                }
            }
            let entry = TopologyCost {
                encoding: t.encoding(),
                branching_degrees: t.branching_degrees(),
                is_star: t.is_star(),
                cost: best.cost,
                sweeps: best.sweeps,
                converged: best.converged,
                histogram: best.flow.branching_degree_histogram(),
            };
            Ok((entry, best))
        })
        .collect::<Result<_>>()?;
    let (best_entry, best_relax) = results
        .iter()
        .min_by(|a, b| {
            a.0.cost
                .total_cmp(&b.0.cost)
                .then_with(|| a.0.encoding.cmp(&b.0.encoding))
        })
        .expect("at least one topology");
    Ok(SolveReport {
        best_flow: best_relax.flow.clone(),
        best_cost: best_entry.cost,
        best_encoding: best_entry.encoding.clone(),
        degree_histogram: best_entry.histogram.clone(),
        iterations: best_relax.sweeps,
        converged: results.iter().all(|r| r.0.converged),
        per_topology: results.iter().map(|r| r.0.clone()).collect(),
        max_degree,
    })
}
