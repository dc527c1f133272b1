//! Tree topologies on labelled terminals with unlabelled branching nodes.
//!
//! Nodes `0..n` are terminals, nodes `n..` branching nodes. Branching nodes
//! have degree at least three; terminals may have any degree.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest terminal count accepted by the enumeration.
pub const MAX_TERMINALS: usize = 7;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub n_terminals: usize,
    pub n_branching: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.n_terminals + self.n_branching
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|(a, b)| *a == node || *b == node).count()
    }

    /// Degrees of the branching nodes, sorted.
    pub fn branching_degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = (self.n_terminals..self.node_count()).map(|v| self.degree(v)).collect();
        d.sort_unstable();
        d
    }

    pub fn max_branching_degree(&self) -> usize {
        self.branching_degrees().last().copied().unwrap_or(0)
    }

    /// Rooted canonical string: rooted at terminal 0, children sorted.
    pub fn encoding(&self) -> String {
        let adj = self.adjacency();
        self.encode(&adj, 0, usize::MAX)
    }

    fn encode(&self, adj: &[Vec<usize>], v: usize, parent: usize) -> String {
        let mut kids: Vec<String> = adj[v]
            .iter()
            .filter(|&&u| u != parent)
            .map(|&u| self.encode(adj, u, v))
            .collect();
        kids.sort();
        let label = if v < self.n_terminals {
            format!("t{v}")
        } else {
            "b".to_string()
        };
        if kids.is_empty() {
            label
        } else {
            format!("{label}({})", kids.join(","))
        }
    }

    /// The star with one branching node joined to every terminal.
    pub fn star(n: usize) -> Self {
        Self {
            n_terminals: n,
            n_branching: 1,
            edges: (0..n).map(|t| (t, n)).collect(),
        }
    }

    pub fn is_star(&self) -> bool {
        self.n_branching == 1 && self.degree(self.n_terminals) == self.n_terminals
    }

    /// Shifts branching node indices after a terminal is added.
    fn with_new_terminal(&self) -> Self {
        let n = self.n_terminals;
        let shift = |v: usize| if v >= n { v + 1 } else { v };
        Self {
            n_terminals: n + 1,
            n_branching: self.n_branching,
            edges: self.edges.iter().map(|&(a, b)| (shift(a), shift(b))).collect(),
        }
    }

    fn push_branching(&mut self) -> usize {
        self.n_branching += 1;
        self.node_count() - 1
    }

    /// Removes branching node `v`, moving the last branching node into its
    /// index.
    fn remove_branching(&mut self, v: usize) {
        let last = self.node_count() - 1;
        self.n_branching -= 1;
        for e in &mut self.edges {
            for x in [&mut e.0, &mut e.1] {
                if *x == last {
                    *x = v;
                }
            }
        }
    }

    /// All trees on one more terminal that reduce to `self` when it is removed.
    fn extensions(&self) -> Vec<Topology> {
        let base = self.with_new_terminal();
        let i = self.n_terminals;
        let mut out = Vec::new();
        for (k, &(a, b)) in base.edges.iter().enumerate() {
            // new branching node on an edge, holding the terminal
            let mut t = base.clone();
            let s = t.push_branching();
            t.edges[k] = (a, s);
            t.edges.push((s, b));
            t.edges.push((i, s));
            out.push(t);
            // the terminal itself subdivides the edge
            let mut t = base.clone();
            t.edges[k] = (a, i);
            t.edges.push((i, b));
            out.push(t);
        }
        for v in 0..base.node_count() {
            if v == i {
                continue;
            }
            let mut t = base.clone();
            t.edges.push((i, v));
            out.push(t);
        }
        for s in base.n_terminals..base.node_count() {
            // the terminal takes over a branching node
            let mut t = base.clone();
            for e in &mut t.edges {
                for x in [&mut e.0, &mut e.1] {
                    if *x == s {
                        *x = i;
                    }
                }
            }
            t.remove_branching(s);
            out.push(t);
        }
        out
    }
}

/// Every tree whose terminals are `0..n` and whose branching nodes have degree
/// in `[3, max_degree]`, one per isomorphism class fixing the terminals,
/// sorted by encoding.
pub fn enumerate_topologies(n: usize, max_degree: usize) -> Result<Vec<Topology>> {
    if n > MAX_TERMINALS {
        return Err(Error::GuardExceeded {
            what: "terminal count for topology enumeration",
            limit: MAX_TERMINALS,
            got: n,
        });
    }
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 terminals, got {n}")));
    }
    if max_degree < 3 || max_degree > n {
        return Err(Error::invalid(format!("maximum degree {max_degree} outside [3, {n}]")));
    }
    let mut level: BTreeMap<String, Topology> = BTreeMap::new();
    let seed = Topology {
        n_terminals: 2,
        n_branching: 0,
        edges: vec![(0, 1)],
    };
    level.insert(seed.encoding(), seed);
    for _ in 2..n {
        let mut next = BTreeMap::new();
        for t in level.values() {
            for ext in t.extensions() {
                next.entry(ext.encoding()).or_insert(ext);
            }
        }
        level = next;
    }
    Ok(level
        .into_values()
        .filter(|t| t.max_branching_degree() <= max_degree)
        .collect())
}
