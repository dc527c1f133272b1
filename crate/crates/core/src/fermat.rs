//! Weighted Fermat–Torricelli points, the triple angle law and the tripod test.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::vector::{self, Point};

/// Points with nonnegative weights; at least two weights are positive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedPoints {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points.len() != weights.len() {
            return Err(Error::invalid("need at least two points with one weight each"));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("points must be finite and share one positive dimension"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if weights.iter().filter(|w| **w > 0.0).count() < 2 {
            return Err(Error::invalid("at least two weights must be positive"));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }

    /// `Σ w_i ‖p_i − x‖`
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * vector::distance(p, x))
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn weighted_centroid(&self) -> Point {
        let mut c = vector::zeros(self.dimension());
        for (p, w) in self.points.iter().zip(&self.weights) {
            vector::axpy(&mut c, *w, p);
        }
        vector::scale(&c, 1.0 / self.total_weight())
    }

    /// Coincident points merged with weights added; each group keeps the
    /// index of its first member.
    fn merged(&self) -> Vec<(usize, Point, f64)> {
        let mut groups: Vec<(usize, Point, f64)> = Vec::new();
        for (i, (p, w)) in self.points.iter().zip(&self.weights).enumerate() {
            match groups.iter_mut().find(|g| g.1 == *p) {
                Some(g) => g.2 += w,
                None => groups.push((i, p.clone(), *w)),
            }
        }
        groups
    }

    /// `‖Σ_{j ≠ k} w_j u_j‖` at merged group `k`, with `u_j` pointing from
    /// group `k` toward group `j`.
    fn pull_at(groups: &[(usize, Point, f64)], k: usize) -> (f64, Point) {
        let base = &groups[k].1;
        let mut s = vector::zeros(base.len());
        for (j, g) in groups.iter().enumerate() {
            if j != k {
                if let Some(u) = vector::unit(&vector::sub(&g.1, base)) {
                    vector::axpy(&mut s, g.2, &u);
                }
            }
        }
        (vector::norm(&s), s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FermatPoint {
    pub point: Point,
    pub value: f64,
    /// Index of the input point the minimizer coincides with.
    pub at_vertex: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FermatOptions {
    /// Stop once the gradient norm is below `grad_tol · Σ w`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Iterates closer than `snap · scale` to an input point count as on it.
    pub snap: f64,
    /// Starting point; the weighted centroid when absent.
    pub start: Option<Point>,
}

impl Default for FermatOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 10_000,
            snap: 1e-13,
            start: None,
        }
    }
}

/// Relative slack accepted in the vertex optimality test.
const VERTEX_TOL: f64 = 1e-12;

/// Whether input point `index` minimizes `Σ w_i ‖p_i − x‖`: the pull of the
/// other points, `‖Σ_{j ≠ index} w_j u_j‖`, must not exceed the weight at
/// `index`. Points coinciding with `index` are merged into it first.
pub fn vertex_optimality_test(wp: &WeightedPoints, index: usize) -> Result<bool> {
    if index >= wp.points.len() {
        return Err(Error::invalid(format!("vertex index {index} out of range")));
    }
    let groups = wp.merged();
    let k = groups
        .iter()
        .position(|g| g.1 == wp.points[index])
        .expect("every point belongs to a group");
    let (pull, _) = WeightedPoints::pull_at(&groups, k);
    Ok(pull <= groups[k].2 + VERTEX_TOL * wp.total_weight())
}

/// Global minimizer of `Σ w_i ‖p_i − x‖`.
pub fn weighted_fermat(wp: &WeightedPoints) -> FermatPoint {
    weighted_fermat_with(wp, &FermatOptions::default())
}

pub fn weighted_fermat_with(wp: &WeightedPoints, opts: &FermatOptions) -> FermatPoint {
    let groups = wp.merged();
    let total = wp.total_weight();
    let vertex_answer = |k: usize| FermatPoint {
        point: groups[k].1.clone(),
        value: wp.objective(&groups[k].1),
        at_vertex: Some(groups[k].0),
        iterations: 0,
        converged: true,
    };

    let live: Vec<usize> = (0..groups.len()).filter(|&k| groups[k].2 > 0.0).collect();
    if live.len() == 1 {
        return vertex_answer(live[0]);
    }
    if let Some(k) = collinear_median(&groups) {
        return vertex_answer(k);
    }
    for k in 0..groups.len() {
        let (pull, _) = WeightedPoints::pull_at(&groups, k);
        if pull <= groups[k].2 + VERTEX_TOL * total {
            return vertex_answer(k);
        }
    }
    interior_descent(wp, &groups, opts)
}

/// The weighted median when all points lie on one line.
fn collinear_median(groups: &[(usize, Point, f64)]) -> Option<usize> {
    let origin = &groups[0].1;
    let far = groups
        .iter()
        .max_by(|a, b| vector::distance(&a.1, origin).total_cmp(&vector::distance(&b.1, origin)))?;
    let axis = vector::unit(&vector::sub(&far.1, origin))?;
    let span = vector::distance(&far.1, origin);
    let mut coords = Vec::with_capacity(groups.len());
    for (k, g) in groups.iter().enumerate() {
        let rel = vector::sub(&g.1, origin);
        let s = vector::dot(&rel, &axis);
        let off = vector::norm(&vector::sub(&rel, &vector::scale(&axis, s)));
        if off > 1e-12 * span {
            return None;
        }
        coords.push((s, k));
    }
    coords.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = groups.iter().map(|g| g.2).sum();
    let mut acc = 0.0;
    for (_, k) in coords {
        acc += groups[k].2;
        if acc >= 0.5 * total {
            return Some(k);
        }
    }
    None
}

fn gradient(groups: &[(usize, Point, f64)], x: &[f64]) -> Point {
    let mut g = vector::zeros(x.len());
    for (_, p, w) in groups {
        if let Some(u) = vector::unit(&vector::sub(x, p)) {
            vector::axpy(&mut g, *w, &u);
        }
    }
    g
}

fn objective(groups: &[(usize, Point, f64)], x: &[f64]) -> f64 {
    groups.iter().map(|(_, p, w)| w * vector::distance(p, x)).sum()
}

/// Newton steps with backtracking, falling back to a Weiszfeld update. The
/// minimizer is known to be away from every input point here.
fn interior_descent(wp: &WeightedPoints, groups: &[(usize, Point, f64)], opts: &FermatOptions) -> FermatPoint {
    let d = wp.dimension();
    let total = wp.total_weight();
    let scale = groups.iter().map(|g| vector::norm(&g.1)).fold(1.0f64, f64::max);
    let mut x = opts.start.clone().unwrap_or_else(|| wp.weighted_centroid());
    x = push_off_vertex(groups, x, scale * opts.snap);
    let mut fx = objective(groups, &x);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let g = gradient(groups, &x);
        if vector::norm(&g) <= opts.grad_tol * total {
            converged = true;
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(d, d);
        let mut num = vector::zeros(d);
        let mut den = 0.0;
        for (_, p, w) in groups {
            let diff = vector::sub(&x, p);
            let r = vector::norm(&diff);
            let u = vector::scale(&diff, 1.0 / r);
            for a in 0..d {
                for b in 0..d {
                    let id = if a == b { 1.0 } else { 0.0 };
                    hess[(a, b)] += w / r * (id - u[a] * u[b]);
                }
            }
            vector::axpy(&mut num, w / r, p);
            den += w / r;
        }
        let mut next = None;
        if let Some(step) = hess.lu().solve(&DVector::from_column_slice(&g)) {
            let mut t = 1.0;
            for _ in 0..40 {
                let cand: Point = x.iter().zip(step.iter()).map(|(xi, si)| xi - t * si).collect();
                let fc = objective(groups, &cand);
                if fc < fx {
                    next = Some((cand, fc));
                    break;
                }
                t *= 0.5;
            }
        }
        let (cand, fc) = next.unwrap_or_else(|| {
            let cand = push_off_vertex(groups, vector::scale(&num, 1.0 / den), scale * opts.snap);
            let fc = objective(groups, &cand);
            (cand, fc)
        });
        if fc >= fx {
            // no representable descent left
            converged = vector::norm(&g) <= 1e3 * opts.grad_tol * total;
            break;
        }
        x = cand;
        fx = fc;
    }
    FermatPoint {
        value: wp.objective(&x),
        point: x,
        at_vertex: None,
        iterations,
        converged,
    }
}

/// Moves an iterate that sits on an input point along the steepest descent
/// direction there. Only called when that point is not optimal.
fn push_off_vertex(groups: &[(usize, Point, f64)], x: Point, snap: f64) -> Point {
    let Some(k) = groups.iter().position(|g| vector::distance(&g.1, &x) <= snap) else {
        return x;
    };
    let (_, pull) = WeightedPoints::pull_at(groups, k);
    let Some(dir) = vector::unit(&pull) else {
        return x;
    };
    let base = groups[k].1.clone();
    let nearest = groups
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, g)| vector::distance(&g.1, &base))
        .fold(f64::INFINITY, f64::min);
    let f0 = objective(groups, &base);
    let mut t = 0.5 * nearest;
    for _ in 0..60 {
        let cand = vector::add(&base, &vector::scale(&dir, t));
        if objective(groups, &cand) < f0 {
            return cand;
        }
        t *= 0.5;
    }
    base
}

/// Angles between the three edges at a triple branching point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripleAngles {
    pub masses: [f64; 3],
    pub theta12: f64,
    pub theta13: f64,
    pub theta23: f64,
    /// The cost triangle is degenerate and the branching is flat.
    pub flat: bool,
}

impl TripleAngles {
    pub fn sum(&self) -> f64 {
        self.theta12 + self.theta13 + self.theta23
    }
}

/// `cos θ_ij = (c²(m_i + m_j) − c²(m_i) − c²(m_j)) / (2 c(m_i) c(m_j))`:
/// the exterior angles of the triangle with sides `c(|m_k|)`.
pub fn triple_angles(cost: &CostModel, m1: f64, m2: f64, m3: f64) -> Result<TripleAngles> {
    let ms = [m1, m2, m3];
    let scale = ms.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    if ms.iter().any(|m| *m == 0.0 || !m.is_finite()) {
        return Err(Error::invalid("triple masses must be finite and nonzero"));
    }
    if (m1 + m2 + m3).abs() > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "triple masses must sum to zero, got {}",
            m1 + m2 + m3
        )));
    }
    let mut flat = false;
    let mut angle = |i: usize, j: usize| -> Result<f64> {
        let (a, b) = (ms[i], ms[j]);
        let cos = (cost.c2(a + b) - cost.c2(a) - cost.c2(b)) / (2.0 * cost.c(a) * cost.c(b));
        if cos.is_nan() || cos.abs() > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "costs of masses {ms:?} violate the triangle inequality"
            )));
        }
        if cos.abs() >= 1.0 - 1e-12 {
            flat = true;
        }
        Ok(cos.clamp(-1.0, 1.0).acos())
    };
    let theta12 = angle(0, 1)?;
    let theta13 = angle(0, 2)?;
    let theta23 = angle(1, 2)?;
    Ok(TripleAngles {
        masses: ms,
        theta12,
        theta13,
        theta23,
        flat,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripodReport {
    /// Tripod cost minus the cost of the two original edges; never positive.
    pub delta: f64,
    pub branching_point: Point,
    pub original_cost: f64,
    pub tripod_cost: f64,
    /// `delta < −tol · original_cost`
    pub strict_improvement: bool,
}

/// Compares edges `apex–q1` (mass `m1`) and `apex–q2` (mass `m2`) with the
/// best tripod through one extra branching point, whose leg toward the apex
/// carries `m1 + m2`.
pub fn tripod_test(
    cost: &CostModel,
    apex: &[f64],
    q1: &[f64],
    m1: f64,
    q2: &[f64],
    m2: f64,
    tol: f64,
) -> Result<TripodReport> {
    if apex == q1 || apex == q2 || q1 == q2 {
        return Err(Error::invalid("tripod points must be pairwise distinct"));
    }
    if m1 == 0.0 || m2 == 0.0 {
        return Err(Error::invalid("tripod edge masses must be nonzero"));
    }
    let (c1, c2) = (cost.c(m1), cost.c(m2));
    let original_cost = c1 * vector::distance(apex, q1) + c2 * vector::distance(apex, q2);
    let wp = WeightedPoints::new(
        vec![apex.to_vec(), q1.to_vec(), q2.to_vec()],
        vec![cost.c(m1 + m2), c1, c2],
    )?;
    let fp = weighted_fermat(&wp);
    let (branching_point, tripod_cost) = if fp.value < original_cost {
        (fp.point, fp.value)
    } else {
        (apex.to_vec(), original_cost)
    };
    let delta = tripod_cost - original_cost;
    Ok(TripodReport {
        delta,
        branching_point,
        original_cost,
        tripod_cost,
        strict_improvement: delta < -tol * original_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn half() -> CostModel {
        CostModel::power(0.5).unwrap()
    }

    fn equilateral() -> Vec<Point> {
        (0..3)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 3.0;
                vec![a.cos(), a.sin()]
            })
            .collect()
    }

    #[test]
    fn equilateral_equal_weights_gives_center() {
        let wp = WeightedPoints::new(equilateral(), vec![1.0; 3]).unwrap();
        let fp = weighted_fermat(&wp);
        assert!(fp.converged && fp.at_vertex.is_none());
        assert!(vector::norm(&fp.point) < 1e-10);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let u = vector::unit(&vector::sub(&wp.points[i], &fp.point)).unwrap();
            let v = vector::unit(&vector::sub(&wp.points[j], &fp.point)).unwrap();
            assert!((vector::dot(&u, &v).acos() - 2.0 * PI / 3.0).abs() < 1e-9);
        }
        for k in 0..3 {
            assert!(!vertex_optimality_test(&wp, k).unwrap());
        }
    }

    #[test]
    fn dominant_weight_returns_vertex() {
        let pts = vec![vec![0.3, 0.1], vec![2.0, 0.5], vec![-0.4, 1.7]];
        let wp = WeightedPoints::new(pts.clone(), vec![3.0, 1.0, 1.0]).unwrap();
        let fp = weighted_fermat(&wp);
        assert_eq!(fp.at_vertex, Some(0));
        assert_eq!(fp.point, pts[0]);
        assert!(vertex_optimality_test(&wp, 0).unwrap());
    }

    #[test]
    fn right_angle_boundary() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let wp = WeightedPoints::new(pts, vec![2f64.sqrt(), 1.0, 1.0]).unwrap();
        assert!(vertex_optimality_test(&wp, 0).unwrap());
    }

    #[test]
    fn coincident_points_merge_in_vertex_test() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let wp = WeightedPoints::new(pts, vec![0.8, 0.7, 1.0, 1.0]).unwrap();
        assert!(vertex_optimality_test(&wp, 0).unwrap());
        assert!(vertex_optimality_test(&wp, 1).unwrap());
    }

    #[test]
    fn collinear_points_return_weighted_median() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, 3.0]];
        let wp = WeightedPoints::new(pts, vec![1.0, 1.0, 1.0]).unwrap();
        let fp = weighted_fermat(&wp);
        assert_eq!(fp.at_vertex, Some(1));
    }

    #[test]
    fn weighted_points_invariants() {
        assert!(WeightedPoints::new(vec![vec![0.0]], vec![1.0]).is_err());
        assert!(WeightedPoints::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).is_err());
        assert!(WeightedPoints::new(vec![vec![0.0], vec![1.0, 2.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn half_power_triple_angles() {
        let t = triple_angles(&half(), 1.0, 1.0, -2.0).unwrap();
        assert!((t.theta12 - PI / 2.0).abs() < 1e-12);
        assert!((t.theta13 - 3.0 * PI / 4.0).abs() < 1e-12);
        assert!((t.theta23 - 3.0 * PI / 4.0).abs() < 1e-12);
        assert!((t.sum() - 2.0 * PI).abs() < 1e-12);
        assert!(!t.flat);
        let scaled = triple_angles(&half(), 3.5, 3.5, -7.0).unwrap();
        assert!((scaled.theta12 - t.theta12).abs() < 1e-12);
        assert!((scaled.theta13 - t.theta13).abs() < 1e-12);
    }

    #[test]
    fn triple_angle_cosine_for_general_power() {
        for &p in &[0.2, 0.45, 0.7, 0.9] {
            let t = triple_angles(&CostModel::power(p).unwrap(), 1.0, 1.0, -2.0).unwrap();
            assert!((t.theta12.cos() - (2f64.powf(2.0 * p - 1.0) - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn triple_angles_preconditions() {
        assert!(triple_angles(&half(), 1.0, 1.0, -1.0).is_err());
        assert!(triple_angles(&half(), 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn tripod_at_critical_angle_has_zero_delta() {
        let t = triple_angles(&half(), 1.0, 1.0, -2.0).unwrap();
        let apex = vec![0.0, 0.0];
        let q1 = vec![1.0, 0.0];
        let q2 = vec![t.theta12.cos() * 1.3, t.theta12.sin() * 1.3];
        let r = tripod_test(&half(), &apex, &q1, 1.0, &q2, 1.0, 1e-10).unwrap();
        assert!(r.delta.abs() <= 1e-10);
        assert!(!r.strict_improvement);
        let narrow = 0.8 * t.theta12;
        let q2 = vec![narrow.cos(), narrow.sin()];
        let r = tripod_test(&half(), &apex, &q1, 1.0, &q2, 1.0, 1e-10).unwrap();
        assert!(r.delta < -1e-6 && r.strict_improvement);
    }

    #[test]
    fn collinear_same_side_edges_merge() {
        let r = tripod_test(&half(), &[0.0, 0.0], &[1.0, 0.0], 1.0, &[2.0, 0.0], 1.0, 1e-10).unwrap();
        assert!(r.strict_improvement);
        assert!(r.branching_point[0] > 0.0);
    }

    #[test]
    fn tripod_with_cancelling_masses() {
        let r = tripod_test(&half(), &[0.0, 0.0], &[1.0, 0.0], 1.0, &[0.0, 1.0], -1.0, 1e-10).unwrap();
        assert!((r.tripod_cost - 2f64.sqrt()).abs() < 1e-9);
        assert!(tripod_test(&half(), &[0.0, 0.0], &[0.0, 0.0], 1.0, &[0.0, 1.0], 1.0, 1e-10).is_err());
    }
}
