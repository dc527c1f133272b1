//! Satisfactory configurations at a branching point.
//!
//! Unit directions `e_1..e_k` with masses summing to zero are satisfactory
//! when every pair obeys
//!
//! ```text
//! ⟨e_i, e_j⟩ ≤ (c²(m_i + m_j) − c²(m_i) − c²(m_j)) / (2 c(m_i) c(m_j))
//! ```

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::model::{Flow, VertexKind};
use crate::tolerance::{is_half, Tolerances};
use crate::vector::{self, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarConfiguration {
    dimension: usize,
    directions: Vec<Point>,
    masses: Vec<f64>,
}

impl StarConfiguration {
    pub fn new(dimension: usize, directions: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        if directions.len() != masses.len() || directions.len() < 2 {
            return Err(Error::invalid("need at least two directions, one mass each"));
        }
        for e in &directions {
            if e.len() != dimension {
                return Err(Error::invalid(format!(
                    "direction {e:?} is not in dimension {dimension}"
                )));
            }
            if (vector::norm(e) - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("direction {e:?} is not a unit vector")));
            }
        }
        check_masses(&masses)?;
        Ok(Self {
            dimension,
            directions,
            masses,
        })
    }

    /// Directions and outgoing masses of the edges at branching vertex `id`.
    pub fn at_vertex(flow: &Flow, id: &str) -> Result<Self> {
        let v = flow
            .index_of(id)
            .ok_or_else(|| Error::invalid(format!("no vertex {id}")))?;
        let adj = flow.incidences();
        let here = &flow.vertices[v].point;
        let mut directions = Vec::new();
        let mut masses = Vec::new();
        for inc in &adj[v] {
            let e = vector::unit(&vector::sub(&flow.vertices[inc.neighbor].point, here))
                .ok_or_else(|| Error::invalid(format!("edge at {id} has zero length")))?;
            directions.push(e);
            masses.push(-inc.inflow);
        }
        let scale = masses.iter().fold(0.0f64, |a, m| a.max(m.abs()));
        let excess: f64 = masses.iter().sum();
        if let Some(first) = masses.first_mut() {
            // absorb roundoff from the flow's own tolerance
            if excess.abs() <= 1e-9 * scale {
                *first -= excess;
            }
        }
        Self::new(here.len(), directions, masses)
    }

    /// Configurations at every branching vertex of `flow`.
    pub fn all_in_flow(flow: &Flow) -> Result<Vec<(String, Self)>> {
        flow.vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Branching)
            .map(|v| Ok((v.id.clone(), Self::at_vertex(flow, &v.id)?)))
            .collect()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn directions(&self) -> &[Point] {
        &self.directions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

fn check_masses(masses: &[f64]) -> Result<()> {
    if masses.iter().any(|m| *m == 0.0 || !m.is_finite()) {
        return Err(Error::invalid("masses must be finite and nonzero"));
    }
    let scale = masses.iter().fold(1.0f64, |a, m| a.max(m.abs()));
    let sum: f64 = masses.iter().sum();
    if sum.abs() > 1e-12 * scale {
        return Err(Error::invalid(format!("masses must sum to zero, got {sum}")));
    }
    Ok(())
}

/// Right-hand side of the pairwise inequality for masses `mi`, `mj`.
pub fn pair_bound(cost: &CostModel, mi: f64, mj: f64) -> f64 {
    (cost.c2(mi + mj) - cost.c2(mi) - cost.c2(mj)) / (2.0 * cost.c(mi) * cost.c(mj))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlackMatrix {
    /// `slack[i][j] = bound(m_i, m_j) − ⟨e_i, e_j⟩`; the diagonal is zero.
    pub slack: Vec<Vec<f64>>,
    pub min_slack: f64,
    pub argmin: (usize, usize),
    pub tolerance: f64,
    pub is_satisfactory: bool,
}

pub fn satisfactory_slack(cost: &CostModel, config: &StarConfiguration) -> SlackMatrix {
    satisfactory_slack_with(cost, config, &Tolerances::default())
}

pub fn satisfactory_slack_with(cost: &CostModel, config: &StarConfiguration, tol: &Tolerances) -> SlackMatrix {
    let k = config.len();
    let bounds = bound_matrix(cost, &config.masses);
    let slack = slack_values(&bounds, &config.directions);
    let (min_slack, argmin) = min_pair(&slack);
    SlackMatrix {
        slack,
        min_slack,
        argmin,
        tolerance: tol.satisfactory,
        is_satisfactory: k < 2 || min_slack >= -tol.satisfactory,
    }
}

fn bound_matrix(cost: &CostModel, masses: &[f64]) -> Vec<Vec<f64>> {
    let k = masses.len();
    let mut b = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = pair_bound(cost, masses[i], masses[j]);
            b[i][j] = v;
            b[j][i] = v;
        }
    }
    b
}

fn slack_values(bounds: &[Vec<f64>], dirs: &[Point]) -> Vec<Vec<f64>> {
    let k = dirs.len();
    let mut s = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = bounds[i][j] - vector::dot(&dirs[i], &dirs[j]);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    s
}

fn min_pair(slack: &[Vec<f64>]) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 1));
    for (i, row) in slack.iter().enumerate() {
        for (j, &s) in row.iter().enumerate().skip(i + 1) {
            if s < best.0 {
                best = (s, (i, j));
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DegreeVerdict {
    /// Every branching point has degree three.
    OnlyTriple,
    /// Degree at most `bound`, attained.
    AtMost { bound: usize },
    /// Degree `lower` is attained; no upper bound in terms of `d` is known.
    LowerBoundOpen { lower: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DegreeBound {
    pub p: f64,
    pub d: usize,
    pub verdict: DegreeVerdict,
}

/// The known degree bound for branching points with cost `x^p` in `R^d`.
pub fn degree_bound(p: f64, d: usize) -> Result<DegreeBound> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("exponent {p} outside (0, 1)")));
    }
    if d < 2 {
        return Err(Error::invalid(format!("dimension {d} below 2")));
    }
    let verdict = if is_half(p) {
        if d == 2 {
            DegreeVerdict::OnlyTriple
        } else {
            DegreeVerdict::AtMost { bound: d + 1 }
        }
    } else if d == 2 || p < 0.5 {
        DegreeVerdict::OnlyTriple
    } else {
        DegreeVerdict::LowerBoundOpen { lower: d + 1 }
    };
    Ok(DegreeBound { p, d, verdict })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalfPowerCheck {
    /// Same-sign pairs are non-acute and opposite-sign pairs strictly obtuse.
    pub angular_pattern: bool,
    /// After projecting out one direction, the remaining directions that
    /// carry the opposite sign to it stay pairwise strictly obtuse.
    pub projection_obtuse: bool,
    pub k: usize,
    pub bound: usize,
    /// All of the above and `k ≤ d + 1`.
    pub holds: bool,
}

/// Checks the angular picture behind the `d + 1` bound at `p = 1/2`.
pub fn verify_half_p_bound(cost: &CostModel, config: &StarConfiguration) -> Result<HalfPowerCheck> {
    match cost.exponent() {
        Some(p) if is_half(p) => {}
        _ => return Err(Error::invalid("the half-power bound needs cost x^(1/2)")),
    }
    let eps = 1e-10;
    let (dirs, ms) = (&config.directions, &config.masses);
    let k = ms.len();
    let mut angular_pattern = true;
    for i in 0..k {
        for j in i + 1..k {
            let ip = vector::dot(&dirs[i], &dirs[j]);
            let same = ms[i].signum() == ms[j].signum();
            if (same && ip > eps) || (!same && ip >= -eps) {
                angular_pattern = false;
            }
        }
    }
    // Project everything onto the complement of the first direction; the
    // opposite-sign directions had strictly negative product with it.
    let u = &dirs[0];
    let projected: Vec<Point> = (1..k)
        .filter(|&j| ms[j].signum() != ms[0].signum())
        .map(|j| {
            let ej = &dirs[j];
            vector::sub(ej, &vector::scale(u, vector::dot(ej, u)))
        })
        .collect();
    let mut projection_obtuse = true;
    for a in 0..projected.len() {
        for b in a + 1..projected.len() {
            if vector::dot(&projected[a], &projected[b]) > eps {
                projection_obtuse = false;
            }
        }
    }
    let bound = config.dimension + 1;
    Ok(HalfPowerCheck {
        angular_pattern,
        projection_obtuse,
        k,
        bound,
        holds: angular_pattern && projection_obtuse && k <= bound,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Run the linear-programming polish after gradient ascent.
    pub polish: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: 100,
            seed: 0,
            polish: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RestartOutcome {
    pub index: usize,
    pub min_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    pub best: StarConfiguration,
    pub min_slack: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartOutcome>,
}

/// Multi-start maximization of the smallest pairwise slack over direction
/// tuples in `R^d` with the given masses.
///
/// A result at or above `−1e-10` exhibits a satisfactory configuration; a
/// negative result only suggests that none exists.
pub fn search_satisfactory(cost: &CostModel, d: usize, masses: &[f64], opts: &SearchOptions) -> Result<SearchReport> {
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if masses.len() < 2 {
        return Err(Error::invalid("need at least two masses"));
    }
    check_masses(masses)?;
    if opts.restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    let bounds = bound_matrix(cost, masses);
    let runs: Vec<(usize, Vec<Point>, f64)> = (0..opts.restarts)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(index as u64);
            let start: Vec<Point> = (0..masses.len()).map(|_| random_unit(&mut rng, d)).collect();
            let mut dirs = ascend(&bounds, start);
            if opts.polish {
                dirs = polish(&bounds, dirs);
            }
            let value = min_pair(&slack_values(&bounds, &dirs)).0;
            (index, dirs, value)
        })
        .collect();
    let (best_restart, dirs, min_slack) = runs
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2).then(b.0.cmp(&a.0)))
        .cloned()
        .expect("at least one restart");
    Ok(SearchReport {
        best: StarConfiguration {
            dimension: d,
            directions: dirs,
            masses: masses.to_vec(),
        },
        min_slack,
        best_restart,
        restarts: runs
            .iter()
            .map(|r| RestartOutcome {
                index: r.0,
                min_slack: r.2,
            })
            .collect(),
    })
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Point {
    loop {
        let v: Point = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(u) = vector::unit(&v) {
            return u;
        }
    }
}

/// `−(1/T) log Σ exp(−T s_ij)` and its softmax pair weights.
fn soft_min(slack: &[Vec<f64>], temp: f64) -> (f64, Vec<Vec<f64>>) {
    let k = slack.len();
    let (lo, _) = min_pair(slack);
    let mut w = vec![vec![0.0; k]; k];
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let x = (-temp * (slack[i][j] - lo)).exp();
            w[i][j] = x;
            total += x;
        }
    }
    for row in &mut w {
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    (lo - total.ln() / temp, w)
}

fn soft_value(bounds: &[Vec<f64>], dirs: &[Point], temp: f64) -> f64 {
    soft_min(&slack_values(bounds, dirs), temp).0
}

/// Projected gradient ascent on the soft-min under an increasing
/// temperature schedule.
fn ascend(bounds: &[Vec<f64>], mut dirs: Vec<Point>) -> Vec<Point> {
    let k = dirs.len();
    let stages = 16;
    for stage in 0..stages {
        let temp = 10.0 * 1000f64.powf(stage as f64 / (stages - 1) as f64);
        let mut step = 0.1;
        for _ in 0..300 {
            let (value, w) = soft_min(&slack_values(bounds, &dirs), temp);
            let mut grad = vec![vector::zeros(dirs[0].len()); k];
            for i in 0..k {
                for j in i + 1..k {
                    vector::axpy(&mut grad[i], -w[i][j], &dirs[j]);
                    vector::axpy(&mut grad[j], -w[i][j], &dirs[i]);
                }
            }
            for (g, e) in grad.iter_mut().zip(&dirs) {
                let along = vector::dot(g, e);
                vector::axpy(g, -along, e);
            }
            let gnorm = grad.iter().map(|g| vector::dot(g, g)).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                break;
            }
            let mut accepted = false;
            while step > 1e-14 {
                let cand: Vec<Point> = dirs
                    .iter()
                    .zip(&grad)
                    .map(|(e, g)| {
                        let moved = vector::add(e, &vector::scale(g, step));
                        vector::unit(&moved).unwrap_or_else(|| e.clone())
                    })
                    .collect();
                if soft_value(bounds, &cand, temp) > value {
                    dirs = cand;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
    dirs
}

/// Sequential linear programming on the exact min slack: maximize `t` with
/// `s_ij − ⟨δ_i, e_j⟩ − ⟨e_i, δ_j⟩ ≥ t`, tangent steps `⟨e_i, δ_i⟩ = 0` and a
/// box trust region.
fn polish(bounds: &[Vec<f64>], mut dirs: Vec<Point>) -> Vec<Point> {
    let k = dirs.len();
    let d = dirs[0].len();
    let mut current = min_pair(&slack_values(bounds, &dirs)).0;
    let mut radius = 1e-2;
    for _ in 0..200 {
        if radius < 1e-15 {
            break;
        }
        let slack = slack_values(bounds, &dirs);
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let t = lp.add_var(1.0, (-4.0, 4.0));
        let delta: Vec<Vec<_>> = (0..k)
            .map(|_| (0..d).map(|_| lp.add_var(0.0, (-radius, radius))).collect())
            .collect();
        for i in 0..k {
            lp.add_constraint(
                (0..d).map(|a| (delta[i][a], dirs[i][a])).collect::<Vec<_>>(),
                ComparisonOp::Eq,
                0.0,
            );
            for j in i + 1..k {
                let mut terms = vec![(t, 1.0)];
                terms.extend((0..d).map(|a| (delta[i][a], dirs[j][a])));
                terms.extend((0..d).map(|a| (delta[j][a], dirs[i][a])));
                lp.add_constraint(terms, ComparisonOp::Le, slack[i][j]);
            }
        }
        let Ok(sol) = lp.solve() else {
            radius *= 0.25;
            continue;
        };
        let cand: Vec<Point> = (0..k)
            .map(|i| {
                let moved: Point = (0..d).map(|a| dirs[i][a] + sol[delta[i][a]]).collect();
                vector::unit(&moved).unwrap_or_else(|| dirs[i].clone())
            })
            .collect();
        let value = min_pair(&slack_values(bounds, &cand)).0;
        if value > current {
            let gain = value - current;
            dirs = cand;
            current = value;
            radius = (radius * 2.0).min(0.5);
            if gain < 1e-16 {
                break;
            }
        } else {
            radius *= 0.25;
        }
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> CostModel {
        CostModel::power(0.5).unwrap()
    }

    fn orthant_config(d: usize) -> StarConfiguration {
        let mut dirs: Vec<Point> = (0..d).map(|i| vector::basis(d, i)).collect();
        dirs.push(vec![-1.0 / (d as f64).sqrt(); d]);
        let mut masses = vec![1.0; d];
        masses.push(-(d as f64));
        StarConfiguration::new(d, dirs, masses).unwrap()
    }

    #[test]
    fn orthant_configuration_is_tight() {
        let s = satisfactory_slack(&half(), &orthant_config(3));
        assert!(s.is_satisfactory);
        for row in &s.slack {
            for x in row {
                assert!(x.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn acute_same_sign_pair_fails_at_half() {
        assert!(pair_bound(&half(), 1.0, 1.0).abs() < 1e-15);
        let a = 0.3f64;
        let cfg = StarConfiguration::new(
            2,
            vec![vec![1.0, 0.0], vec![a.cos(), a.sin()], vec![-1.0, 0.0]],
            vec![1.0, 1.0, -2.0],
        )
        .unwrap();
        let s = satisfactory_slack(&half(), &cfg);
        assert!(s.slack[0][1] < 0.0 && !s.is_satisfactory);
    }

    #[test]
    fn antipodal_pair_has_zero_slack() {
        let cfg = StarConfiguration::new(2, vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![2.5, -2.5]).unwrap();
        let s = satisfactory_slack(&CostModel::power(0.37).unwrap(), &cfg);
        assert!(s.slack[0][1].abs() < 1e-15);
        assert!(s.is_satisfactory);
    }

    #[test]
    fn configuration_invariants() {
        assert!(StarConfiguration::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, -0.5]).is_err());
        assert!(StarConfiguration::new(2, vec![vec![2.0, 0.0], vec![0.0, 1.0]], vec![1.0, -1.0]).is_err());
        assert!(StarConfiguration::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn degree_bound_table() {
        assert_eq!(degree_bound(0.3, 5).unwrap().verdict, DegreeVerdict::OnlyTriple);
        assert_eq!(
            degree_bound(0.5, 3).unwrap().verdict,
            DegreeVerdict::AtMost { bound: 4 }
        );
        assert_eq!(
            degree_bound(0.7, 3).unwrap().verdict,
            DegreeVerdict::LowerBoundOpen { lower: 4 }
        );
        assert_eq!(degree_bound(0.7, 2).unwrap().verdict, DegreeVerdict::OnlyTriple);
        assert_eq!(degree_bound(0.5, 2).unwrap().verdict, DegreeVerdict::OnlyTriple);
        assert_eq!(
            degree_bound(0.5 + 1e-16, 4).unwrap().verdict,
            DegreeVerdict::AtMost { bound: 5 }
        );
        assert!(degree_bound(1.0, 3).is_err());
        assert!(degree_bound(0.5, 1).is_err());
    }

    #[test]
    fn half_power_bound_on_examples() {
        let check = verify_half_p_bound(&half(), &orthant_config(3)).unwrap();
        assert!(check.holds && check.k == 4);
        let planar = StarConfiguration::new(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5f64.sqrt(), -0.5f64.sqrt()]],
            vec![1.0, 1.0, -2.0],
        )
        .unwrap();
        assert!(verify_half_p_bound(&half(), &planar).unwrap().holds);
        assert!(verify_half_p_bound(&CostModel::power(0.6).unwrap(), &planar).is_err());
    }

    #[test]
    fn search_finds_orthant_at_half() {
        let opts = SearchOptions {
            restarts: 8,
            seed: 7,
            polish: true,
        };
        let r = search_satisfactory(&half(), 3, &[1.0, 1.0, 1.0, -3.0], &opts).unwrap();
        assert!(r.min_slack >= -1e-8, "got {}", r.min_slack);
        let again = search_satisfactory(&half(), 3, &[1.0, 1.0, 1.0, -3.0], &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn search_fails_in_plane_and_below_half() {
        let opts = SearchOptions {
            restarts: 8,
            seed: 1,
            polish: true,
        };
        let planar = search_satisfactory(&half(), 2, &[1.0, 1.0, 1.0, -3.0], &opts).unwrap();
        assert!(planar.min_slack < 0.0);
        let low = search_satisfactory(&CostModel::power(0.4).unwrap(), 3, &[1.0, 1.0, 1.0, -3.0], &opts).unwrap();
        assert!(low.restarts.iter().all(|r| r.min_slack < 0.0));
        assert!(search_satisfactory(&half(), 3, &[1.0, 1.0], &opts).is_err());
    }
}
