//! Explicit flows with high-degree branching, and the four-armed fractal
//! irrigation tree.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::model::{Atom, AtomicMeasure, Edge, Flow, TransportInstance, Vertex};
use crate::vector::{self, Point};

/// Largest depth accepted by [`universal_tree`].
pub const MAX_TREE_DEPTH: usize = 12;

/// Unit vectors with a common pairwise inner product `a`, and the unit
/// vector `e` with `Σ e_i + d^p e = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquiangularFrame {
    pub d: usize,
    pub p: f64,
    pub a: f64,
    pub vectors: Vec<Point>,
    pub apex: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalTreeSpec {
    pub depth: usize,
    pub length_ratio: f64,
    pub branch_angle: f64,
}

impl Default for UniversalTreeSpec {
    fn default() -> Self {
        Self {
            depth: 5,
            length_ratio: 0.7,
            branch_angle: FRAC_PI_4,
        }
    }
}

/// A star through one point: every sink and the source attach to `center`
/// (a new branching point), or to the first source when `center` is `None`.
/// Only single-source instances are accepted.
pub fn star_flow(instance: &TransportInstance, center: Option<&[f64]>) -> Result<Flow> {
    let terms = instance.terminals();
    let sources: Vec<_> = terms.iter().filter(|t| t.net > 0.0).collect();
    if sources.len() != 1 {
        return Err(Error::invalid("a star flow needs exactly one source"));
    }
    let src = sources[0];
    let mut vertices: Vec<Vertex> = terms
        .iter()
        .map(|t| Vertex::terminal(t.id.clone(), t.point.clone()))
        .collect();
    let hub = match center {
        Some(c) => {
            vertices.push(Vertex::branching("b0", c.to_vec()));
            "b0".to_string()
        }
        None => src.id.clone(),
    };
    let mut edges: Vec<Edge> = terms
        .iter()
        .filter(|t| t.net < 0.0)
        .map(|t| Edge::new(t.id.clone(), hub.clone(), -t.net))
        .collect();
    if center.is_some() {
        edges.push(Edge::new(hub, src.id.clone(), src.net));
    }
    Ok(Flow::new(vertices, edges))
}

fn single_source(d: usize, source: Point, sinks: Vec<Atom>, cost: CostModel) -> Result<TransportInstance> {
    let supply = sinks.iter().map(|a| a.mass).sum();
    TransportInstance::new(
        d,
        AtomicMeasure::new(vec![Atom::new(source, supply)])?,
        AtomicMeasure::new(sinks)?,
        cost,
    )
}

/// Sinks at the standard basis points with masses `m_i`, a branching point at
/// the origin and the source at the unit vector
/// `e = −Σ √m_i e_i / √Σ m_i`; cost `x^{1/2}`.
pub fn example_orthant(d: usize, masses: &[f64]) -> Result<(TransportInstance, Flow)> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    if masses.len() != d {
        return Err(Error::invalid(format!("need {d} masses, got {}", masses.len())));
    }
    if masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::invalid("masses must be positive"));
    }
    let total: f64 = masses.iter().sum();
    let e: Point = masses.iter().map(|m| -m.sqrt() / total.sqrt()).collect();
    let sinks = (0..d).map(|i| Atom::new(vector::basis(d, i), masses[i])).collect();
    let instance = single_source(d, e, sinks, CostModel::power(0.5)?)?;
    let flow = star_flow(&instance, Some(&vector::zeros(d)))?;
    Ok((instance, flow))
}

/// Unit vectors with Gram matrix `(1 − a) I + a 11ᵀ`,
/// `a = (d^{2p−1} − 1)/(d − 1)`, as the columns of the matrix square root.
pub fn equiangular_frame(d: usize, p: f64) -> Result<EquiangularFrame> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    if !(0.5..1.0).contains(&p) {
        return Err(Error::invalid(format!("exponent {p} outside [1/2, 1)")));
    }
    let df = d as f64;
    let a = (df.powf(2.0 * p - 1.0) - 1.0) / (df - 1.0);
    let gram = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { a });
    let eig = SymmetricEigen::new(gram);
    let mut lam = eig.eigenvalues.clone();
    for l in lam.iter_mut() {
        assert!(*l > -1e-12, "Gram matrix of an equiangular frame is not PSD");
        *l = l.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&lam) * q.transpose();
    let vectors: Vec<Point> = (0..d)
        .map(|j| {
            let col: Point = root.column(j).iter().copied().collect();
            vector::unit(&col).expect("nonzero column")
        })
        .collect();
    let mut sum = vector::zeros(d);
    for v in &vectors {
        vector::axpy(&mut sum, 1.0, v);
    }
    let apex = vector::scale(&sum, -1.0 / df.powf(p));
    if (vector::norm(&apex) - 1.0).abs() > 1e-10 {
        return Err(Error::invalid("apex vector is not a unit vector"));
    }
    let apex = vector::unit(&apex).expect("unit apex");
    Ok(EquiangularFrame { d, p, a, vectors, apex })
}

/// Unit-mass sinks on an equiangular frame with the source on its apex and a
/// branching point at the origin; cost `x^p`.
pub fn example_equiangular(d: usize, p: f64) -> Result<(TransportInstance, Flow, EquiangularFrame)> {
    let frame = equiangular_frame(d, p)?;
    let sinks = frame.vectors.iter().map(|v| Atom::new(v.clone(), 1.0)).collect();
    let instance = single_source(d, frame.apex.clone(), sinks, CostModel::power(p)?)?;
    let flow = star_flow(&instance, Some(&vector::zeros(d)))?;
    Ok((instance, flow, frame))
}

/// Source of supply `2d` at the origin, unit sinks at `±e_i`; cost `x^{1/2}`.
/// Sinks are ordered `+e_1, −e_1, +e_2, …`.
pub fn example_double_star(d: usize) -> Result<(TransportInstance, Flow)> {
    if d < 2 {
        return Err(Error::invalid("dimension must be at least 2"));
    }
    let sinks = (0..d)
        .flat_map(|i| {
            let e = vector::basis(d, i);
            [Atom::new(e.clone(), 1.0), Atom::new(vector::scale(&e, -1.0), 1.0)]
        })
        .collect();
    let instance = single_source(d, vector::zeros(d), sinks, CostModel::power(0.5)?)?;
    let flow = star_flow(&instance, None)?;
    Ok((instance, flow))
}

/// Four binary self-similar arms from a source at the origin, cost `x^{1/2}`.
///
/// Level-`ℓ` edges have length `ratio^{ℓ−1}` and carry `2^{depth−ℓ}`; each
/// child turns by `±branch_angle` and the leaves are unit sinks.
pub fn universal_tree(spec: &UniversalTreeSpec) -> Result<(TransportInstance, Flow)> {
    if spec.depth == 0 || spec.depth > MAX_TREE_DEPTH {
        return Err(Error::GuardExceeded {
            what: "universal tree depth",
            limit: MAX_TREE_DEPTH,
            got: spec.depth,
        });
    }
    if !(spec.length_ratio > 0.0 && spec.length_ratio.is_finite()) {
        return Err(Error::invalid("length ratio must be positive"));
    }
    if !(spec.branch_angle > 0.0 && spec.branch_angle < std::f64::consts::FRAC_PI_2) {
        return Err(Error::invalid("branch angle must lie in (0, π/2)"));
    }
    let mut vertices = vec![Vertex::terminal("s0", vec![0.0, 0.0])];
    let mut edges = Vec::new();
    let mut leaves = Vec::new();
    let mut branch_count = 0usize;
    // (parent id, parent point, heading, level)
    let mut stack: Vec<(String, Point, f64, usize)> = (0..4)
        .rev()
        .map(|k| {
            (
                "s0".to_string(),
                vec![0.0, 0.0],
                k as f64 * std::f64::consts::FRAC_PI_2,
                1,
            )
        })
        .collect();
    while let Some((parent, at, heading, level)) = stack.pop() {
        let len = spec.length_ratio.powi(level as i32 - 1);
        let here = vec![at[0] + len * heading.cos(), at[1] + len * heading.sin()];
        let mass = 2f64.powi((spec.depth - level) as i32);
        let id = if level == spec.depth {
            let id = format!("t{}", leaves.len());
            leaves.push(Atom::new(here.clone(), 1.0));
            vertices.push(Vertex::terminal(id.clone(), here.clone()));
            id
        } else {
            let id = format!("b{branch_count}");
            branch_count += 1;
            vertices.push(Vertex::branching(id.clone(), here.clone()));
            for turn in [-spec.branch_angle, spec.branch_angle] {
                stack.push((id.clone(), here.clone(), heading + turn, level + 1));
            }
            id
        };
        edges.push(Edge::new(id, parent, mass));
    }
    let instance = single_source(2, vec![0.0, 0.0], leaves, CostModel::power(0.5)?)?;
    Ok((instance, Flow::new(vertices, edges)))
}
