//! Global optimality certificates for star flows.
//!
//! A star with center `o`, sinks `p_i` with demands `m_i` and directions
//! `e_i = unit(p_i − o)` is optimal iff the balance condition holds (when the
//! source `q` sits elsewhere) and every nonempty subset `I` satisfies
//!
//! ```text
//! ‖Σ_{i∈I} c(m_i) e_i‖² ≤ c²(Σ_{i∈I} m_i)
//! ```

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::model::{Atom, Flow, TransportInstance, VertexKind};
use crate::tolerance::Tolerances;
use crate::vector::{self, Point};

/// Largest sink count accepted by exhaustive enumeration.
pub const EXHAUSTIVE_LIMIT: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarInstance {
    pub origin: Point,
    pub sinks: Vec<Atom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Point>,
}

impl StarInstance {
    pub fn new(origin: Point, sinks: Vec<Atom>, source: Option<Point>) -> Result<Self> {
        let s = Self { origin, sinks, source };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<()> {
        let d = self.origin.len();
        if d == 0 {
            return Err(Error::invalid("origin must have a positive dimension"));
        }
        if self.sinks.is_empty() {
            return Err(Error::invalid("a star needs at least one sink"));
        }
        for (i, a) in self.sinks.iter().enumerate() {
            if a.point.len() != d {
                return Err(Error::invalid(format!("sink {i} is not in dimension {d}")));
            }
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(Error::invalid(format!("sink {i} has nonpositive demand {}", a.mass)));
            }
            if a.point == self.origin {
                return Err(Error::invalid(format!("sink {i} coincides with the origin")));
            }
        }
        if let Some(q) = &self.source {
            if q.len() != d {
                return Err(Error::invalid("source is not in the origin's dimension"));
            }
            if *q == self.origin {
                return Err(Error::invalid("source coincides with the origin"));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.origin.len()
    }

    pub fn total_demand(&self) -> f64 {
        self.sinks.iter().map(|a| a.mass).sum()
    }

    /// Reads a star off a flow whose edges all meet at one vertex: a
    /// branching center fed by one source, or a source center.
    pub fn from_star_flow(instance: &TransportInstance, flow: &Flow) -> Result<Self> {
        if flow.edges.is_empty() {
            return Err(Error::invalid("flow has no edges"));
        }
        let adj = flow.incidences();
        let center = (0..flow.vertices.len())
            .find(|&v| adj[v].len() == flow.edges.len())
            .ok_or_else(|| Error::invalid("flow is not a star"))?;
        let terminals = instance.terminals();
        let net = |id: &str| terminals.iter().find(|t| t.id == id).map(|t| t.net);
        let origin = flow.vertices[center].point.clone();
        let mut sinks = Vec::new();
        let mut source = None;
        for inc in &adj[center] {
            let v = &flow.vertices[inc.neighbor];
            match net(&v.id) {
                Some(m) if m < 0.0 => sinks.push(Atom::new(v.point.clone(), -m)),
                Some(m) if m > 0.0 && source.is_none() => source = Some(v.point.clone()),
                _ => {
                    return Err(Error::invalid(format!(
                        "star leaf {} is not a single sink or the source",
                        v.id
                    )))
                }
            }
        }
        match flow.vertices[center].kind {
            VertexKind::Branching if source.is_some() => {}
            VertexKind::Terminal if source.is_none() && net(&flow.vertices[center].id).is_some_and(|m| m > 0.0) => {}
            _ => {
                return Err(Error::invalid(
                    "star center must be a branching point with one source, or the source",
                ))
            }
        }
        Self::new(origin, sinks, source)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Optimal,
    NotOptimal,
    InconclusiveSampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CertifyMode {
    Exhaustive,
    Sampled { count: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StarCertificate {
    pub verdict: Verdict,
    /// `‖Σ c(m_i) e_i + c(Σ m_i) e‖`, absent for a source center.
    pub balance_residual: Option<f64>,
    /// Sink indices of the subset with the smallest slack.
    pub worst_subset: Vec<usize>,
    pub worst_slack: f64,
    pub subsets_checked: u64,
    /// Subsets with slack below `−tol`.
    pub violations: u64,
    /// Optimal with some constraint active within tolerance.
    pub boundary: bool,
    /// `unit(Σ_{i∈I} c(m_i) e_i)` for the worst subset when it is violated.
    pub improving_direction: Option<Point>,
    /// Smallest slack per subset size; index 0 is unused.
    pub size_minima: Vec<Option<f64>>,
    pub tolerance: f64,
}

pub fn certify_star(instance: &StarInstance, cost: &CostModel, mode: CertifyMode) -> Result<StarCertificate> {
    certify_star_with(instance, cost, mode, &Tolerances::default())
}

pub fn certify_star_with(
    instance: &StarInstance,
    cost: &CostModel,
    mode: CertifyMode,
    tol: &Tolerances,
) -> Result<StarCertificate> {
    instance.check()?;
    let n = instance.sinks.len();
    let eps = tol.certificate;
    let weighted: Vec<Point> = instance
        .sinks
        .iter()
        .map(|a| {
            let e = vector::unit(&vector::sub(&a.point, &instance.origin)).expect("checked distinct");
            vector::scale(&e, cost.c(a.mass))
        })
        .collect();
    let masses: Vec<f64> = instance.sinks.iter().map(|a| a.mass).collect();

    let balance_residual = instance.source.as_ref().map(|q| {
        let e = vector::unit(&vector::sub(q, &instance.origin)).expect("checked distinct");
        let mut s = vector::scale(&e, cost.c(instance.total_demand()));
        for w in &weighted {
            vector::axpy(&mut s, 1.0, w);
        }
        vector::norm(&s)
    });

    let scan = match mode {
        CertifyMode::Exhaustive => {
            if n > EXHAUSTIVE_LIMIT {
                return Err(Error::GuardExceeded {
                    what: "sink count for exhaustive certification",
                    limit: EXHAUSTIVE_LIMIT,
                    got: n,
                });
            }
            exhaustive(&weighted, &masses, cost, eps)
        }
        CertifyMode::Sampled { count, seed } => {
            if n > 63 {
                return Err(Error::GuardExceeded {
                    what: "sink count for sampled certification",
                    limit: 63,
                    got: n,
                });
            }
            sampled(&weighted, &masses, cost, eps, count, seed)
        }
    };

    let balanced = balance_residual.is_none_or(|r| r <= eps);
    let passed = balanced && scan.best.0 >= -eps;
    let verdict = match (passed, mode) {
        (false, _) => Verdict::NotOptimal,
        (true, CertifyMode::Exhaustive) => Verdict::Optimal,
        (true, CertifyMode::Sampled { .. }) => Verdict::InconclusiveSampled,
    };
    let worst_subset: Vec<usize> = (0..n).filter(|i| scan.best.1 >> i & 1 == 1).collect();
    let improving_direction = (scan.best.0 < -eps)
        .then(|| vector::unit(&subset_vector(&weighted, scan.best.1)))
        .flatten();
    Ok(StarCertificate {
        verdict,
        balance_residual,
        worst_subset,
        worst_slack: scan.best.0,
        subsets_checked: scan.count,
        violations: scan.violations,
        boundary: passed && scan.best.0 <= eps,
        improving_direction,
        size_minima: scan.per_size,
        tolerance: eps,
    })
}

/// Smallest subset slack for every subset size, by exhaustive enumeration.
pub fn subset_slack_profile(instance: &StarInstance, cost: &CostModel) -> Result<Vec<(usize, f64)>> {
    let cert = certify_star(instance, cost, CertifyMode::Exhaustive)?;
    Ok(cert
        .size_minima
        .iter()
        .enumerate()
        .filter_map(|(s, m)| m.map(|m| (s, m)))
        .collect())
}

/// Whether `x ↦ (x^{2p−1} − 1)/(x − 1)` is nonincreasing over `grid`.
pub fn monotone_ratio_check(p: f64, grid: &[f64]) -> Result<bool> {
    if !(0.5..1.0).contains(&p) {
        return Err(Error::invalid(format!("exponent {p} outside [1/2, 1)")));
    }
    if grid.iter().any(|x| !(*x > 1.0 && x.is_finite())) {
        return Err(Error::invalid("grid points must exceed 1"));
    }
    let mut xs = grid.to_vec();
    xs.sort_by(f64::total_cmp);
    let ratio = |x: f64| (x.powf(2.0 * p - 1.0) - 1.0) / (x - 1.0);
    Ok(xs.windows(2).all(|w| ratio(w[1]) <= ratio(w[0]) + 1e-15))
}

#[derive(Clone, Debug)]
struct Scan {
    best: (f64, u64),
    count: u64,
    violations: u64,
    per_size: Vec<Option<f64>>,
}

impl Scan {
    fn new(n: usize) -> Self {
        Self {
            best: (f64::INFINITY, 0),
            count: 0,
            violations: 0,
            per_size: vec![None; n + 1],
        }
    }

    fn record(&mut self, mask: u64, slack: f64, eps: f64) {
        self.count += 1;
        if slack < -eps {
            self.violations += 1;
        }
        if slack < self.best.0 || (slack == self.best.0 && mask < self.best.1) {
            self.best = (slack, mask);
        }
        let s = mask.count_ones() as usize;
        let slot = &mut self.per_size[s];
        *slot = Some(slot.map_or(slack, |m: f64| m.min(slack)));
    }

    fn merge(mut self, other: Scan) -> Scan {
        self.count += other.count;
        self.violations += other.violations;
        if other.best.0 < self.best.0 || (other.best.0 == self.best.0 && other.best.1 < self.best.1) {
            self.best = other.best;
        }
        for (a, b) in self.per_size.iter_mut().zip(other.per_size) {
            *a = match (*a, b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
        }
        self
    }
}

fn subset_vector(weighted: &[Point], mask: u64) -> Point {
    let mut v = vector::zeros(weighted[0].len());
    for (i, w) in weighted.iter().enumerate() {
        if mask >> i & 1 == 1 {
            vector::axpy(&mut v, 1.0, w);
        }
    }
    v
}

fn subset_mass(masses: &[f64], mask: u64) -> f64 {
    masses
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, m)| m)
        .sum()
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

const RESYNC: u64 = 4096;

/// Enumerates all nonempty subsets in Gray-code order, split into a fixed
/// number of contiguous blocks so results do not depend on the thread count.
fn exhaustive(weighted: &[Point], masses: &[f64], cost: &CostModel, eps: f64) -> Scan {
    let n = masses.len();
    let total = 1u64 << n;
    let blocks: u64 = if n > 14 { 1 << (n - 12).min(8) } else { 1 };
    let len = total / blocks;
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut scan = Scan::new(n);
            let start = (b * len).max(1);
            let end = (b + 1) * len;
            let mut mask = gray(start);
            let mut v = subset_vector(weighted, mask);
            let mut m = subset_mass(masses, mask);
            for i in start..end {
                if i > start {
                    mask = gray(i);
                    if (i - start).is_multiple_of(RESYNC) {
                        v = subset_vector(weighted, mask);
                        m = subset_mass(masses, mask);
                    } else {
                        let bit = i.trailing_zeros() as usize;
                        let sign = if mask >> bit & 1 == 1 { 1.0 } else { -1.0 };
                        vector::axpy(&mut v, sign, &weighted[bit]);
                        m += sign * masses[bit];
                    }
                }
                scan.record(mask, cost.c2(m) - vector::dot(&v, &v), eps);
            }
            scan
        })
        .reduce(|| Scan::new(n), Scan::merge)
}

fn sampled(weighted: &[Point], masses: &[f64], cost: &CostModel, eps: f64, count: u64, seed: u64) -> Scan {
    let n = masses.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scan = Scan::new(n);
    for _ in 0..count {
        let mask = rng.random_range(1..1u64 << n);
        let v = subset_vector(weighted, mask);
        scan.record(mask, cost.c2(subset_mass(masses, mask)) - vector::dot(&v, &v), eps);
    }
    scan
}
