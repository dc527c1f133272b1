//! Geometric relaxation of a fixed topology by block-coordinate descent:
//! each branching node in turn moves to the weighted Fermat point of its
//! neighbours, weighted by `c(|m|)` of the connecting edges.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::topology::Topology;
use crate::error::{Error, Result};
use crate::fermat::{weighted_fermat_with, FermatOptions, WeightedPoints};
use crate::model::{normalize, Edge, Flow, Terminal, TransportInstance, Vertex};
use crate::tolerance::Tolerances;
use crate::vector::{self, Point};

#[derive(Clone, Debug, PartialEq)]
pub struct RelaxOptions {
    /// Stop once no node moves more than `tol · diameter` in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Adjacent nodes closer than `collapse · diameter` are merged.
    pub collapse: f64,
    pub max_collapse_rounds: usize,
    /// Random initial positions inside the bounding box instead of the
    /// distance-weighted centroids.
    pub random_start: Option<u64>,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
            collapse: 1e-9,
            max_collapse_rounds: 3,
            random_start: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Relaxation {
    pub flow: Flow,
    pub cost: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Total cost after each sweep, starting with the initial layout.
    pub history: Vec<f64>,
    pub collapsed: usize,
}

/// Working state: a tree on terminals and branching nodes with signed edge
/// masses `(child, parent, m)` oriented so that `m = −net(subtree(child))`.
#[derive(Clone, Debug)]
struct Layout {
    n_terminals: usize,
    points: Vec<Point>,
    alive: Vec<bool>,
    edges: Vec<(usize, usize, f64)>,
}

impl Layout {
    fn cost(&self, c: &dyn Fn(f64) -> f64) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b, m)| c(m) * vector::distance(&self.points[a], &self.points[b]))
            .sum()
    }
}

/// Edge masses implied on a tree by the terminal nets.
fn implied_masses(topology: &Topology, terminals: &[Terminal]) -> Vec<(usize, usize, f64)> {
    let adj = topology.adjacency();
    let n = topology.node_count();
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([0usize]);
    parent[0] = 0;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &u in &adj[v] {
            if parent[u] == usize::MAX {
                parent[u] = v;
                queue.push_back(u);
            }
        }
    }
    let mut net: Vec<f64> = (0..n)
        .map(|v| if v < terminals.len() { terminals[v].net } else { 0.0 })
        .collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in order.iter().rev() {
        if v == 0 {
            continue;
        }
        edges.push((v, parent[v], -net[v]));
        net[parent[v]] += net[v];
    }
    edges.reverse();
    edges
}

fn initial_points(topology: &Topology, terminals: &[Terminal], random: Option<u64>) -> Vec<Point> {
    let adj = topology.adjacency();
    let n = topology.n_terminals;
    let d = terminals[0].point.len();
    let mut points: Vec<Point> = terminals.iter().map(|t| t.point.clone()).collect();
    let mut rng = random.map(ChaCha8Rng::seed_from_u64);
    let (lo, hi): (Point, Point) = (0..d)
        .map(|a| {
            let xs = terminals.iter().map(|t| t.point[a]);
            (
                xs.clone().fold(f64::INFINITY, f64::min),
                xs.fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .unzip();
    for s in n..topology.node_count() {
        if let Some(rng) = rng.as_mut() {
            points.push((0..d).map(|a| lo[a] + (hi[a] - lo[a]) * rng.random::<f64>()).collect());
            continue;
        }
        // weights 2^{-tree distance}
        let mut dist = vec![usize::MAX; topology.node_count()];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        let mut acc = vector::zeros(d);
        let mut total = 0.0;
        for (t, term) in terminals.iter().enumerate() {
            let w = 0.5f64.powi(dist[t] as i32);
            vector::axpy(&mut acc, w, &term.point);
            total += w;
        }
        points.push(vector::scale(&acc, 1.0 / total));
    }
    points
}

/// Relaxes the branching geometry of `topology` for `instance`.
///
/// Topology node `t < n` is the `t`-th entry of `instance.terminals()`.
pub fn relax_geometry(instance: &TransportInstance, topology: &Topology, opts: &RelaxOptions) -> Result<Relaxation> {
    let terminals = instance.terminals();
    if topology.n_terminals != terminals.len() {
        return Err(Error::invalid(format!(
            "topology has {} terminals, instance has {}",
            topology.n_terminals,
            terminals.len()
        )));
    }
    if topology.edges.len() + 1 != topology.node_count() {
        return Err(Error::invalid("topology is not a tree"));
    }
    let cost = instance.cost().clone();
    let c = move |m: f64| cost.c(m);
    let diameter = instance.diameter().max(f64::MIN_POSITIVE);
    let scale = instance.total_mass();

    let mut layout = Layout {
        n_terminals: topology.n_terminals,
        points: initial_points(topology, &terminals, opts.random_start),
        alive: vec![true; topology.node_count()],
        edges: implied_masses(topology, &terminals)
            .into_iter()
            .filter(|e| e.2.abs() > 1e-12 * scale)
            .collect(),
    };

    let mut history = vec![layout.cost(&c)];
    let mut sweeps = 0;
    let mut converged = false;
    let mut collapsed = 0;
    for round in 0..=opts.max_collapse_rounds {
        converged = false;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut moved = sweep(&mut layout, &c, 1e-14 * diameter)?;
            if let Some(step) = newton_step(&mut layout, &c, 1e-12 * diameter) {
                moved = moved.max(step);
            }
            history.push(layout.cost(&c));
            if moved <= opts.tol * diameter {
                converged = true;
                if newton_step(&mut layout, &c, 1e-12 * diameter).is_some() {
                    history.push(layout.cost(&c));
                }
                break;
            }
        }
        if round == opts.max_collapse_rounds || !collapse_once(&mut layout, opts.collapse * diameter) {
            break;
        }
        collapsed += 1;
        while collapse_once(&mut layout, opts.collapse * diameter) {
            collapsed += 1;
        }
    }

    let flow = to_flow(&layout, &terminals);
    let total = layout.cost(&c);
    Ok(Relaxation {
        flow,
        cost: total,
        sweeps,
        converged,
        history,
        collapsed,
    })
}

/// Groups of nodes joined by edges of length at most `eps`, each holding at
/// least one branching node. Members share one position in practice.
fn clusters(layout: &Layout, eps: f64) -> Vec<Vec<usize>> {
    let n_nodes = layout.points.len();
    let mut parent: Vec<usize> = (0..n_nodes).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b, _) in &layout.edges {
        if (a >= layout.n_terminals || b >= layout.n_terminals)
            && vector::distance(&layout.points[a], &layout.points[b]) <= eps
        {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n_nodes {
        if layout.alive[v] {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
    }
    groups
        .into_values()
        .filter(|g| g.iter().any(|&v| v >= layout.n_terminals))
        .collect()
}

/// Weighted Fermat point of the neighbours outside `group`, and the cost of
/// those edges before and after moving the whole group there.
fn group_move(layout: &Layout, group: &[usize], c: &dyn Fn(f64) -> f64) -> Result<Option<(Point, f64, f64)>> {
    let inside = |v: usize| group.contains(&v);
    let ext: Vec<(usize, f64)> = layout
        .edges
        .iter()
        .filter_map(|&(a, b, m)| match (inside(a), inside(b)) {
            (true, false) => Some((b, m)),
            (false, true) => Some((a, m)),
            _ => None,
        })
        .collect();
    if ext.len() < 2 {
        return Ok(None);
    }
    let at = &layout.points[group[0]];
    let cost_at = |x: &[f64]| -> f64 {
        ext.iter()
            .map(|&(u, m)| c(m) * vector::distance(&layout.points[u], x))
            .sum()
    };
    let wp = WeightedPoints::new(
        ext.iter().map(|&(u, _)| layout.points[u].clone()).collect(),
        ext.iter().map(|&(_, m)| c(m)).collect(),
    )?;
    let fp = weighted_fermat_with(
        &wp,
        &FermatOptions {
            start: Some(at.clone()),
            ..FermatOptions::default()
        },
    );
    Ok(Some((fp.point.clone(), cost_at(at), cost_at(&fp.point))))
}

/// One block-coordinate sweep. Every cluster is moved as a whole to the
/// Fermat point of its outside neighbours, or split along one of its
/// internal edges when that lowers the cost more. Returns the largest move.
fn sweep(layout: &mut Layout, c: &dyn Fn(f64) -> f64, eps: f64) -> Result<f64> {
    let n = layout.n_terminals;
    let mut moved = 0.0f64;
    for cluster in clusters(layout, eps) {
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        if cluster.iter().all(|&v| v >= n) {
            candidates.push(cluster.clone());
        }
        let internal: Vec<(usize, usize)> = layout
            .edges
            .iter()
            .filter(|e| cluster.contains(&e.0) && cluster.contains(&e.1))
            .map(|e| (e.0, e.1))
            .collect();
        for (k, &(a, b)) in internal.iter().enumerate() {
            for root in [a, b] {
                // the side of the cut edge that contains `root`
                let mut side = vec![root];
                let mut i = 0;
                while i < side.len() {
                    let v = side[i];
                    for (j, &(x, y)) in internal.iter().enumerate() {
                        if j == k {
                            continue;
                        }
                        let other = if x == v {
                            y
                        } else if y == v {
                            x
                        } else {
                            continue;
                        };
                        if !side.contains(&other) {
                            side.push(other);
                        }
                    }
                    i += 1;
                }
                if side.iter().all(|&v| v >= n) && side.len() < cluster.len() {
                    candidates.push(side);
                }
            }
        }
        let mut best: Option<(Vec<usize>, Point, f64)> = None;
        for group in candidates {
            if let Some((target, before, after)) = group_move(layout, &group, c)? {
                let gain = before - after;
                let needed = if group.len() == cluster.len() {
                    0.0
                } else {
                    1e-15 * before.max(1.0)
                };
                if gain >= needed && best.as_ref().is_none_or(|b| gain > b.2) {
                    best = Some((group, target, gain));
                }
            }
        }
        if let Some((group, target, _)) = best {
            for v in group {
                moved = moved.max(vector::distance(&layout.points[v], &target));
                layout.points[v] = target.clone();
            }
        }
    }
    Ok(moved)
}

/// Joint damped Newton step on all branching positions, taken only while
/// every edge is longer than `eps` so the objective is smooth. Returns the
/// largest displacement of an accepted step.
fn newton_step(layout: &mut Layout, c: &dyn Fn(f64) -> f64, eps: f64) -> Option<f64> {
    let n = layout.n_terminals;
    let d = layout.points[0].len();
    let free: Vec<usize> = (n..layout.points.len()).filter(|&v| layout.alive[v]).collect();
    if free.is_empty() {
        return None;
    }
    let slot = |v: usize| free.iter().position(|&f| f == v);
    let dim = free.len() * d;
    let mut grad = DVector::<f64>::zeros(dim);
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for &(a, b, m) in &layout.edges {
        let diff = vector::sub(&layout.points[a], &layout.points[b]);
        let r = vector::norm(&diff);
        if r <= eps {
            return None;
        }
        let w = c(m);
        let u = vector::scale(&diff, 1.0 / r);
        let (sa, sb) = (slot(a), slot(b));
        for (s, sign) in [(sa, 1.0), (sb, -1.0)] {
            if let Some(s) = s {
                for i in 0..d {
                    grad[s * d + i] += sign * w * u[i];
                }
            }
        }
        for (x, y, sign) in [(sa, sa, 1.0), (sb, sb, 1.0), (sa, sb, -1.0), (sb, sa, -1.0)] {
            if let (Some(x), Some(y)) = (x, y) {
                for i in 0..d {
                    for j in 0..d {
                        let id = if i == j { 1.0 } else { 0.0 };
                        hess[(x * d + i, y * d + j)] += sign * w / r * (id - u[i] * u[j]);
                    }
                }
            }
        }
    }
    let step = hess.lu().solve(&grad)?;
    let before = layout.cost(c);
    let saved: Vec<Point> = free.iter().map(|&v| layout.points[v].clone()).collect();
    let mut t = 1.0;
    for _ in 0..30 {
        for (k, &v) in free.iter().enumerate() {
            for i in 0..d {
                layout.points[v][i] = saved[k][i] - t * step[k * d + i];
            }
        }
        let after = layout.cost(c);
        // near the optimum cost differences drop below rounding
        let level = after <= before * (1.0 + 4.0 * f64::EPSILON);
        if after < before || (level && gradient_norm(layout, &free, c) < grad.norm()) {
            let moved = free
                .iter()
                .zip(&saved)
                .map(|(&v, p)| vector::distance(&layout.points[v], p))
                .fold(0.0, f64::max);
            return Some(moved);
        }
        t *= 0.5;
    }
    for (k, &v) in free.iter().enumerate() {
        layout.points[v] = saved[k].clone();
    }
    None
}

fn gradient_norm(layout: &Layout, free: &[usize], c: &dyn Fn(f64) -> f64) -> f64 {
    let d = layout.points[0].len();
    let mut g = vec![vector::zeros(d); free.len()];
    for &(a, b, m) in &layout.edges {
        if let Some(u) = vector::unit(&vector::sub(&layout.points[a], &layout.points[b])) {
            if let Some(k) = free.iter().position(|&f| f == a) {
                vector::axpy(&mut g[k], c(m), &u);
            }
            if let Some(k) = free.iter().position(|&f| f == b) {
                vector::axpy(&mut g[k], -c(m), &u);
            }
        }
    }
    g.iter().map(|x| vector::dot(x, x)).sum::<f64>().sqrt()
}

/// Contracts one edge between a branching node and a node within `eps`.
/// The surviving node is the terminal, or the lower index.
fn collapse_once(layout: &mut Layout, eps: f64) -> bool {
    let n = layout.n_terminals;
    let hit = layout
        .edges
        .iter()
        .position(|&(a, b, _)| (a >= n || b >= n) && vector::distance(&layout.points[a], &layout.points[b]) <= eps);
    let Some(k) = hit else {
        return false;
    };
    let (a, b, _) = layout.edges.remove(k);
    let (keep, gone) = match (a < n, b < n) {
        (true, _) => (a, b),
        (_, true) => (b, a),
        _ => (a.min(b), a.max(b)),
    };
    for e in &mut layout.edges {
        if e.0 == gone {
            e.0 = keep;
        }
        if e.1 == gone {
            e.1 = keep;
        }
    }
    layout.alive[gone] = false;
    true
}

fn to_flow(layout: &Layout, terminals: &[Terminal]) -> Flow {
    let n = layout.n_terminals;
    let mut ids: Vec<String> = terminals.iter().map(|t| t.id.clone()).collect();
    let mut vertices: Vec<Vertex> = terminals
        .iter()
        .map(|t| Vertex::terminal(t.id.clone(), t.point.clone()))
        .collect();
    let mut next = 0;
    for v in n..layout.points.len() {
        if layout.alive[v] {
            let id = format!("b{next}");
            next += 1;
            vertices.push(Vertex::branching(id.clone(), layout.points[v].clone()));
            ids.push(id);
        } else {
            ids.push(String::new());
        }
    }
    let edges = layout
        .edges
        .iter()
        .map(|&(a, b, m)| {
            // store with positive mass
            if m >= 0.0 {
                Edge::new(ids[a].clone(), ids[b].clone(), m)
            } else {
                Edge::new(ids[b].clone(), ids[a].clone(), -m)
            }
        })
        .collect();
    normalize(&Flow::new(vertices, edges), &Tolerances::default())
}
