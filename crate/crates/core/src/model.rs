//! Atomic measures, transport instances, flows and the Gilbert functional.
//!
//! Edge masses follow the divergence identity literally: an edge stored as
//! `(from, to, mass)` is the label `m(from, to) = mass` with
//! `m(to, from) = -mass`, and at every vertex `v`
//!
//! ```text
//! Σ_{u ~ v} m(u, v) = μ⁺({v}) − μ⁻({v})
//! ```
//!
//! so an edge contributes `+mass` at `to` and `-mass` at `from`. Flows built
//! by this crate store edges pointing from the sink side toward the source side
//! with positive masses.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::tolerance::Tolerances;
use crate::vector::{self, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub point: Point,
    pub mass: f64,
}

impl Atom {
    pub fn new(point: Point, mass: f64) -> Self {
        Self { point, mass }
    }
}

/// A finite measure with strictly positive masses at pairwise distinct points.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let dim = atoms.first().map(|a| a.point.len());
        for (i, a) in atoms.iter().enumerate() {
            if a.point.is_empty() || Some(a.point.len()) != dim {
                return Err(Error::invalid(format!("atom {i} has inconsistent dimension")));
            }
            if a.point.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("atom {i} has a non-finite coordinate")));
            }
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::invalid(format!("atom {i} has nonpositive mass {}", a.mass)));
            }
            if atoms[..i].iter().any(|b| b.point == a.point) {
                return Err(Error::invalid(format!("atom {i} repeats an earlier point")));
            }
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// A vertex of the support of `μ⁺ − μ⁻`, with its net mass.
#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub id: String,
    pub point: Point,
    /// `μ⁺({x}) − μ⁻({x})`
    pub net: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportInstance {
    dimension: usize,
    sources: AtomicMeasure,
    sinks: AtomicMeasure,
    cost: CostModel,
}

impl TransportInstance {
    pub fn new(dimension: usize, sources: AtomicMeasure, sinks: AtomicMeasure, cost: CostModel) -> Result<Self> {
        Self::with_tolerances(dimension, sources, sinks, cost, &Tolerances::default())
    }

    pub fn with_tolerances(
        dimension: usize,
        sources: AtomicMeasure,
        sinks: AtomicMeasure,
        cost: CostModel,
        tol: &Tolerances,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if sources.is_empty() || sinks.is_empty() {
            return Err(Error::invalid("both measures need at least one atom"));
        }
        for a in sources.atoms().iter().chain(sinks.atoms()) {
            if a.point.len() != dimension {
                return Err(Error::invalid(format!(
                    "atom at {:?} does not live in dimension {dimension}",
                    a.point
                )));
            }
        }
        let (plus, minus) = (sources.total_mass(), sinks.total_mass());
        if (plus - minus).abs() > tol.mass_balance * plus.max(minus) {
            return Err(Error::invalid(format!(
                "total masses differ: sources {plus}, sinks {minus}"
            )));
        }
        Ok(Self {
            dimension,
            sources,
            sinks,
            cost,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn sources(&self) -> &AtomicMeasure {
        &self.sources
    }

    pub fn sinks(&self) -> &AtomicMeasure {
        &self.sinks
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn total_mass(&self) -> f64 {
        self.sources.total_mass()
    }

    /// The same measures under another cost model.
    pub fn with_cost(&self, cost: CostModel) -> Self {
        Self { cost, ..self.clone() }
    }

    /// Points carrying nonzero net mass. Sources are named `s{i}` and sinks
    /// `t{j}`; a sink sharing a point with a source is folded into it.
    pub fn terminals(&self) -> Vec<Terminal> {
        let mut out: Vec<Terminal> = self
            .sources
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, a)| Terminal {
                id: format!("s{i}"),
                point: a.point.clone(),
                net: a.mass,
            })
            .collect();
        for (j, a) in self.sinks.atoms().iter().enumerate() {
            match out.iter_mut().find(|t| t.point == a.point) {
                Some(t) => t.net -= a.mass,
                None => out.push(Terminal {
                    id: format!("t{j}"),
                    point: a.point.clone(),
                    net: -a.mass,
                }),
            }
        }
        let scale = self.total_mass();
        out.retain(|t| t.net.abs() > 1e-15 * scale);
        out
    }

    pub fn diameter(&self) -> f64 {
        vector::diameter(self.sources.atoms().iter().chain(self.sinks.atoms()).map(|a| &a.point))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Terminal,
    Branching,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vertex {
    pub id: String,
    pub point: Point,
    pub kind: VertexKind,
}

impl Vertex {
    pub fn terminal(id: impl Into<String>, point: Point) -> Self {
        Self {
            id: id.into(),
            point,
            kind: VertexKind::Terminal,
        }
    }

    pub fn branching(id: impl Into<String>, point: Point) -> Self {
        Self {
            id: id.into(),
            point,
            kind: VertexKind::Branching,
        }
    }
}

/// The label `m(from, to) = mass`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub mass: f64,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, mass: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            mass,
        }
    }
}

/// One incident edge as seen from a vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Incidence {
    pub edge: usize,
    pub neighbor: usize,
    /// `m(neighbor, v)`
    pub inflow: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flow {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl Flow {
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Self {
        Self { vertices, edges }
    }

    pub fn dimension(&self) -> Option<usize> {
        self.vertices.first().map(|v| v.point.len())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn vertex(&self, id: &str) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    fn id_map(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            map.entry(v.id.as_str()).or_insert(i);
        }
        map
    }

    /// Incidence lists per vertex index; edges naming unknown ids are skipped.
    pub fn incidences(&self) -> Vec<Vec<Incidence>> {
        let ids = self.id_map();
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (k, e) in self.edges.iter().enumerate() {
            if let (Some(&x), Some(&y)) = (ids.get(e.from.as_str()), ids.get(e.to.as_str())) {
                if x == y {
                    continue;
                }
                adj[y].push(Incidence {
                    edge: k,
                    neighbor: x,
                    inflow: e.mass,
                });
                adj[x].push(Incidence {
                    edge: k,
                    neighbor: y,
                    inflow: -e.mass,
                });
            }
        }
        adj
    }

    pub fn degree(&self, id: &str) -> usize {
        self.edges
            .iter()
            .filter(|e| e.from != e.to && (e.from == id || e.to == id))
            .count()
    }

    pub fn branching_ids(&self) -> Vec<&str> {
        self.vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Branching)
            .map(|v| v.id.as_str())
            .collect()
    }

    /// Degrees of all branching vertices, keyed by degree.
    pub fn branching_degree_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let adj = self.incidences();
        let mut hist = std::collections::BTreeMap::new();
        for (v, inc) in self.vertices.iter().zip(&adj) {
            if v.kind == VertexKind::Branching {
                *hist.entry(inc.len()).or_insert(0) += 1;
            }
        }
        hist
    }

    /// Applies `f` to every coordinate vector.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Point) -> Flow {
        Flow {
            vertices: self
                .vertices
                .iter()
                .map(|v| Vertex {
                    point: f(&v.point),
                    ..v.clone()
                })
                .collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn length(&self, edge: &Edge) -> Option<f64> {
        let a = self.vertex(&edge.from)?;
        let b = self.vertex(&edge.to)?;
        Some(vector::distance(&a.point, &b.point))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum Issue {
    DimensionMismatch {
        vertex: String,
        expected: usize,
        got: usize,
    },
    NonFiniteCoordinate {
        vertex: String,
    },
    DuplicateVertexId {
        id: String,
    },
    UnknownVertex {
        edge: usize,
        id: String,
    },
    SelfLoop {
        edge: usize,
    },
    DuplicateEdge {
        edge: usize,
        first: usize,
    },
    ZeroMass {
        edge: usize,
    },
    NonFiniteMass {
        edge: usize,
    },
    CoincidentVertices {
        first: String,
        second: String,
    },
    MissingTerminal {
        point: Point,
        net: f64,
    },
    TerminalWithoutMass {
        vertex: String,
    },
    Divergence {
        vertex: String,
        expected: f64,
        actual: f64,
    },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DimensionMismatch { vertex, expected, got } => {
                write!(f, "vertex {vertex} has dimension {got}, expected {expected}")
            }
            Issue::NonFiniteCoordinate { vertex } => write!(f, "vertex {vertex} has a non-finite coordinate"),
            Issue::DuplicateVertexId { id } => write!(f, "vertex id {id} is not unique"),
            Issue::UnknownVertex { edge, id } => write!(f, "edge {edge} names unknown vertex {id}"),
            Issue::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Issue::DuplicateEdge { edge, first } => write!(f, "edge {edge} repeats edge {first}"),
            Issue::ZeroMass { edge } => write!(f, "edge {edge} has zero mass"),
            Issue::NonFiniteMass { edge } => write!(f, "edge {edge} has a non-finite mass"),
            Issue::CoincidentVertices { first, second } => {
                write!(f, "vertices {first} and {second} share coordinates")
            }
            Issue::MissingTerminal { point, net } => {
                write!(f, "no terminal vertex at {point:?} (net mass {net})")
            }
            Issue::TerminalWithoutMass { vertex } => {
                write!(f, "terminal vertex {vertex} carries no mass in the instance")
            }
            Issue::Divergence {
                vertex,
                expected,
                actual,
            } => {
                write!(f, "divergence at {vertex} is {actual}, expected {expected}")
            }
        }
    }
}

/// Every violated flow invariant; empty iff the flow is valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn max_coordinate(flow: &Flow) -> f64 {
    flow.vertices
        .iter()
        .flat_map(|v| v.point.iter())
        .fold(1.0f64, |a, x| if x.is_finite() { a.max(x.abs()) } else { a })
}

/// Pairs of vertices closer than `eps`, found by a sweep over the first axis.
fn coincident_pairs(flow: &Flow, eps: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..flow.vertices.len())
        .filter(|&i| {
            let p = &flow.vertices[i].point;
            !p.is_empty() && p.iter().all(|x| x.is_finite())
        })
        .collect();
    order.sort_by(|&a, &b| flow.vertices[a].point[0].total_cmp(&flow.vertices[b].point[0]));
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let pi = &flow.vertices[i].point;
        for &j in &order[k + 1..] {
            let pj = &flow.vertices[j].point;
            if pj[0] - pi[0] > eps {
                break;
            }
            if pj.len() == pi.len() && vector::distance(pi, pj) <= eps {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}

fn structural_issues(flow: &Flow, tol: &Tolerances) -> Vec<Issue> {
    let mut issues = Vec::new();
    let dim = flow.dimension().unwrap_or(0);
    let mut seen = HashSet::new();
    for v in &flow.vertices {
        if v.point.len() != dim || dim == 0 {
            issues.push(Issue::DimensionMismatch {
                vertex: v.id.clone(),
                expected: dim,
                got: v.point.len(),
            });
        }
        if v.point.iter().any(|x| !x.is_finite()) {
            issues.push(Issue::NonFiniteCoordinate { vertex: v.id.clone() });
        }
        if !seen.insert(v.id.as_str()) {
            issues.push(Issue::DuplicateVertexId { id: v.id.clone() });
        }
    }
    let ids = flow.id_map();
    let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
    for (k, e) in flow.edges.iter().enumerate() {
        let mut ends = [None, None];
        for (slot, id) in ends.iter_mut().zip([&e.from, &e.to]) {
            *slot = ids.get(id.as_str()).copied();
            if slot.is_none() {
                issues.push(Issue::UnknownVertex {
                    edge: k,
                    id: id.clone(),
                });
            }
        }
        if e.from == e.to {
            issues.push(Issue::SelfLoop { edge: k });
        } else if let [Some(x), Some(y)] = ends {
            if let Some(&first) = pairs.get(&(x.min(y), x.max(y))) {
                issues.push(Issue::DuplicateEdge { edge: k, first });
            } else {
                pairs.insert((x.min(y), x.max(y)), k);
            }
        }
        if !e.mass.is_finite() {
            issues.push(Issue::NonFiniteMass { edge: k });
        } else if e.mass == 0.0 {
            issues.push(Issue::ZeroMass { edge: k });
        }
    }
    if !tol.allow_coincident {
        let eps = tol.relative * max_coordinate(flow);
        for (i, j) in coincident_pairs(flow, eps) {
            issues.push(Issue::CoincidentVertices {
                first: flow.vertices[i].id.clone(),
                second: flow.vertices[j].id.clone(),
            });
        }
    }
    issues
}

fn divergence_issues(flow: &Flow, expected: &[f64], scale: f64, tol: &Tolerances) -> Vec<Issue> {
    let adj = flow.incidences();
    let limit = tol.relative * scale;
    flow.vertices
        .iter()
        .zip(&adj)
        .zip(expected)
        .filter_map(|((v, inc), &want)| {
            let got: f64 = inc.iter().map(|i| i.inflow).sum();
            ((got - want).abs() > limit || !got.is_finite()).then(|| Issue::Divergence {
                vertex: v.id.clone(),
                expected: want,
                actual: got,
            })
        })
        .collect()
}

fn mass_scale(flow: &Flow) -> f64 {
    flow.edges
        .iter()
        .map(|e| e.mass.abs())
        .filter(|m| m.is_finite())
        .fold(0.0f64, f64::max)
}

/// Reports every violated invariant of `flow` as a `(μ⁺, μ⁻)`-flow.
pub fn validate_flow(instance: &TransportInstance, flow: &Flow) -> ValidationReport {
    validate_flow_with(instance, flow, &Tolerances::default())
}

pub fn validate_flow_with(instance: &TransportInstance, flow: &Flow, tol: &Tolerances) -> ValidationReport {
    let mut issues = structural_issues(flow, tol);
    if let Some(d) = flow.dimension() {
        if d != instance.dimension() {
            issues.push(Issue::DimensionMismatch {
                vertex: flow.vertices[0].id.clone(),
                expected: instance.dimension(),
                got: d,
            });
            return ValidationReport { issues };
        }
    }
    let scale_len = tol.relative * max_coordinate(flow).max(instance.diameter());
    let mut expected = vec![0.0; flow.vertices.len()];
    let mut matched = vec![false; flow.vertices.len()];
    for t in instance.terminals() {
        let hit = flow.vertices.iter().position(|v| {
            v.kind == VertexKind::Terminal
                && v.point.len() == t.point.len()
                && vector::distance(&v.point, &t.point) <= scale_len
        });
        match hit {
            Some(i) => {
                expected[i] += t.net;
                matched[i] = true;
            }
            None => issues.push(Issue::MissingTerminal {
                point: t.point.clone(),
                net: t.net,
            }),
        }
    }
    let atom_points: Vec<&Point> = instance
        .sources()
        .atoms()
        .iter()
        .chain(instance.sinks().atoms())
        .map(|a| &a.point)
        .collect();
    for (i, v) in flow.vertices.iter().enumerate() {
        if v.kind == VertexKind::Terminal
            && !matched[i]
            && !atom_points
                .iter()
                .any(|p| p.len() == v.point.len() && vector::distance(p, &v.point) <= scale_len)
        {
            issues.push(Issue::TerminalWithoutMass { vertex: v.id.clone() });
        }
    }
    let scale = instance.total_mass().max(mass_scale(flow));
    issues.extend(divergence_issues(flow, &expected, scale, tol));
    ValidationReport { issues }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeCost {
    pub edge: usize,
    pub from: String,
    pub to: String,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowCost {
    pub total: f64,
    pub per_edge: Vec<EdgeCost>,
}

/// `Σ c(|m(x, y)|) · ‖x − y‖` over all edges.
///
/// Without an instance only the structural invariants and the divergence at
/// branching points can be checked; those are enforced here.
pub fn gilbert_functional(flow: &Flow, cost: &CostModel) -> Result<FlowCost> {
    gilbert_functional_with(flow, cost, &Tolerances::default())
}

pub fn gilbert_functional_with(flow: &Flow, cost: &CostModel, tol: &Tolerances) -> Result<FlowCost> {
    let mut issues = structural_issues(flow, tol);
    if issues.is_empty() {
        let adj = flow.incidences();
        let limit = tol.relative * mass_scale(flow);
        for (v, inc) in flow.vertices.iter().zip(&adj) {
            if v.kind == VertexKind::Branching {
                let got: f64 = inc.iter().map(|i| i.inflow).sum();
                if got.abs() > limit {
                    issues.push(Issue::Divergence {
                        vertex: v.id.clone(),
                        expected: 0.0,
                        actual: got,
                    });
                }
            }
        }
    }
    ValidationReport { issues }.into_result()?;
    Ok(edge_costs(flow, cost))
}

pub(crate) fn edge_costs(flow: &Flow, cost: &CostModel) -> FlowCost {
    let ids = flow.id_map();
    let per_edge: Vec<EdgeCost> = flow
        .edges
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let a = &flow.vertices[ids[e.from.as_str()]].point;
            let b = &flow.vertices[ids[e.to.as_str()]].point;
            EdgeCost {
                edge: k,
                from: e.from.clone(),
                to: e.to.clone(),
                contribution: cost.c(e.mass) * vector::distance(a, b),
            }
        })
        .collect();
    FlowCost {
        total: per_edge.iter().map(|e| e.contribution).sum(),
        per_edge,
    }
}

/// Whether the edge set has no cycle as an undirected graph.
pub fn is_forest(flow: &Flow) -> bool {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let names = flow
        .vertices
        .iter()
        .map(|v| v.id.as_str())
        .chain(flow.edges.iter().flat_map(|e| [e.from.as_str(), e.to.as_str()]));
    for id in names {
        let n = ids.len();
        ids.entry(id).or_insert(n);
    }
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &flow.edges {
        let ra = find(&mut parent, ids[e.from.as_str()]);
        let rb = find(&mut parent, ids[e.to.as_str()]);
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

/// Merges degree-2 branching points whose incident masses agree and drops
/// isolated branching points. Repeats until nothing changes.
pub fn normalize(flow: &Flow, tol: &Tolerances) -> Flow {
    let mut out = flow.clone();
    loop {
        let adj = out.incidences();
        let limit = tol.relative * mass_scale(&out).max(f64::MIN_POSITIVE);
        let mut target = None;
        for (i, v) in out.vertices.iter().enumerate() {
            if v.kind != VertexKind::Branching {
                continue;
            }
            match adj[i].as_slice() {
                [] => {
                    target = Some((i, None));
                    break;
                }
                [a, b] if (a.inflow + b.inflow).abs() <= limit => {
                    target = Some((i, Some((*a, *b))));
                    break;
                }
                _ => {}
            }
        }
        let Some((v, through)) = target else {
            return out;
        };
        let mut drop_edges = HashSet::new();
        if let Some((a, b)) = through {
            drop_edges.insert(a.edge);
            drop_edges.insert(b.edge);
            let from = out.vertices[a.neighbor].id.clone();
            let to = out.vertices[b.neighbor].id.clone();
            // m(a, b) continues m(a, v)
            let mass = a.inflow;
            let existing = out
                .edges
                .iter()
                .position(|e| (e.from == from && e.to == to) || (e.from == to && e.to == from));
            match existing {
                Some(k) => {
                    let e = &mut out.edges[k];
                    e.mass += if e.from == from { mass } else { -mass };
                    if e.mass.abs() <= limit {
                        drop_edges.insert(k);
                    }
                }
                None => out.edges.push(Edge::new(from, to, mass)),
            }
        }
        out.edges = out
            .edges
            .into_iter()
            .enumerate()
            .filter(|(k, _)| !drop_edges.contains(k))
            .map(|(_, e)| e)
            .collect();
        out.vertices.remove(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> CostModel {
        CostModel::power(0.5).unwrap()
    }

    fn single_edge() -> (TransportInstance, Flow) {
        let inst = TransportInstance::new(
            2,
            AtomicMeasure::new(vec![Atom::new(vec![0.0, 0.0], 1.0)]).unwrap(),
            AtomicMeasure::new(vec![Atom::new(vec![1.0, 0.0], 1.0)]).unwrap(),
            half(),
        )
        .unwrap();
        let flow = Flow::new(
            vec![
                Vertex::terminal("s0", vec![0.0, 0.0]),
                Vertex::terminal("t0", vec![1.0, 0.0]),
            ],
            vec![Edge::new("t0", "s0", 1.0)],
        );
        (inst, flow)
    }

    #[test]
    fn single_edge_cost_and_validity() {
        let (inst, flow) = single_edge();
        assert!(validate_flow(&inst, &flow).is_valid());
        let c = gilbert_functional(&flow, &half()).unwrap();
        assert_eq!(c.total, 1.0);
        assert!(is_forest(&flow));
    }

    #[test]
    fn heavy_edge_contribution() {
        let flow = Flow::new(
            vec![
                Vertex::terminal("a", vec![0.0, 0.0, 0.0]),
                Vertex::terminal("b", vec![0.0, 3.0, 0.0]),
            ],
            vec![Edge::new("a", "b", 4.0)],
        );
        let c = gilbert_functional(&flow, &half()).unwrap();
        assert_eq!(c.per_edge[0].contribution, 6.0);
        assert_eq!(c.total, 6.0);
    }

    #[test]
    fn perturbed_mass_violates_both_endpoints() {
        let (inst, mut flow) = single_edge();
        flow.edges[0].mass += 1e-3;
        let report = validate_flow(&inst, &flow);
        let names: Vec<&str> = report
            .issues
            .iter()
            .filter_map(|i| match i {
                Issue::Divergence { vertex, .. } => Some(vertex.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(names, ["s0", "t0"]);
    }

    #[test]
    fn unequal_degree_two_branching_is_rejected() {
        let (inst, _) = single_edge();
        let flow = Flow::new(
            vec![
                Vertex::terminal("s0", vec![0.0, 0.0]),
                Vertex::terminal("t0", vec![1.0, 0.0]),
                Vertex::branching("b", vec![0.5, 0.5]),
            ],
            vec![Edge::new("t0", "b", 1.0), Edge::new("b", "s0", 0.7)],
        );
        let report = validate_flow(&inst, &flow);
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::Divergence { vertex, .. } if vertex == "b")));
        assert!(matches!(gilbert_functional(&flow, &half()), Err(Error::Validation(_))));
    }

    #[test]
    fn triangle_is_not_a_forest() {
        let flow = Flow::new(
            vec![
                Vertex::terminal("a", vec![0.0, 0.0]),
                Vertex::terminal("b", vec![1.0, 0.0]),
                Vertex::terminal("c", vec![0.0, 1.0]),
            ],
            vec![
                Edge::new("a", "b", 1.0),
                Edge::new("b", "c", 1.0),
                Edge::new("c", "a", 1.0),
            ],
        );
        assert!(!is_forest(&flow));
    }

    #[test]
    fn structural_errors_are_named() {
        let flow = Flow::new(
            vec![
                Vertex::terminal("a", vec![0.0, 0.0]),
                Vertex::terminal("a", vec![1.0, 0.0]),
                Vertex::branching("c", vec![0.0, 0.0]),
            ],
            vec![
                Edge::new("a", "a", 1.0),
                Edge::new("a", "zz", 0.0),
                Edge::new("a", "c", 1.0),
                Edge::new("c", "a", 1.0),
            ],
        );
        let report = gilbert_functional(&flow, &half()).unwrap_err();
        let Error::Validation(report) = report else { panic!() };
        let has = |f: fn(&Issue) -> bool| report.issues.iter().any(f);
        assert!(has(|i| matches!(i, Issue::DuplicateVertexId { .. })));
        assert!(has(|i| matches!(i, Issue::SelfLoop { edge: 0 })));
        assert!(has(|i| matches!(i, Issue::UnknownVertex { edge: 1, .. })));
        assert!(has(|i| matches!(i, Issue::ZeroMass { edge: 1 })));
        assert!(has(|i| matches!(i, Issue::DuplicateEdge { edge: 3, first: 2 })));
        assert!(has(|i| matches!(i, Issue::CoincidentVertices { .. })));
    }

    #[test]
    fn coincident_vertices_allowed_by_flag() {
        let flow = Flow::new(
            vec![
                Vertex::terminal("a", vec![0.0, 0.0]),
                Vertex::branching("b", vec![0.0, 0.0]),
                Vertex::terminal("c", vec![1.0, 0.0]),
            ],
            vec![Edge::new("b", "a", 1.0), Edge::new("c", "b", 1.0)],
        );
        assert!(gilbert_functional(&flow, &half()).is_err());
        let tol = Tolerances {
            allow_coincident: true,
            ..Tolerances::default()
        };
        assert_eq!(gilbert_functional_with(&flow, &half(), &tol).unwrap().total, 1.0);
    }

    #[test]
    fn missing_terminal_is_reported() {
        let (inst, mut flow) = single_edge();
        flow.vertices[1].point = vec![2.0, 0.0];
        let report = validate_flow(&inst, &flow);
        assert!(report.issues.iter().any(|i| matches!(i, Issue::MissingTerminal { .. })));
        assert!(report
            .issues
            .iter()
            .any(|i| matches!(i, Issue::TerminalWithoutMass { .. })));
    }

    #[test]
    fn unbalanced_instance_is_rejected() {
        let r = TransportInstance::new(
            1,
            AtomicMeasure::new(vec![Atom::new(vec![0.0], 1.0)]).unwrap(),
            AtomicMeasure::new(vec![Atom::new(vec![1.0], 1.0 + 1e-9)]).unwrap(),
            half(),
        );
        assert!(r.is_err());
        assert!(AtomicMeasure::new(vec![Atom::new(vec![0.0], -1.0)]).is_err());
        assert!(AtomicMeasure::new(vec![Atom::new(vec![0.0], 1.0), Atom::new(vec![0.0], 2.0)]).is_err());
    }

    #[test]
    fn normalize_merges_through_points() {
        let (inst, _) = single_edge();
        let flow = Flow::new(
            vec![
                Vertex::terminal("s0", vec![0.0, 0.0]),
                Vertex::terminal("t0", vec![1.0, 0.0]),
                Vertex::branching("b", vec![0.5, 0.5]),
                Vertex::branching("lonely", vec![3.0, 3.0]),
            ],
            vec![Edge::new("t0", "b", 1.0), Edge::new("b", "s0", 1.0)],
        );
        assert!(validate_flow(&inst, &flow).is_valid());
        let n = normalize(&flow, &Tolerances::default());
        assert_eq!(n.vertices.len(), 2);
        assert_eq!(n.edges, vec![Edge::new("t0", "s0", 1.0)]);
        assert!(validate_flow(&inst, &n).is_valid());
    }

    #[test]
    fn terminals_fold_shared_points() {
        let inst = TransportInstance::new(
            1,
            AtomicMeasure::new(vec![Atom::new(vec![0.0], 2.0)]).unwrap(),
            AtomicMeasure::new(vec![Atom::new(vec![0.0], 1.0), Atom::new(vec![1.0], 1.0)]).unwrap(),
            half(),
        )
        .unwrap();
        let t = inst.terminals();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].id.as_str(), t[0].net), ("s0", 1.0));
        assert_eq!((t[1].id.as_str(), t[1].net), ("t1", -1.0));
    }
}
