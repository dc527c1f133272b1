//! Cost models `c(·)` and their analytic predicates.
//!
//! A cost is always evaluated at `|m|`, so it is even in the signed mass.

mod decomposition;
mod majorize;
mod quadrature;

pub use decomposition::{
    decomposition_exponent, decomposition_exponent_with, decomposition_integral, DecompositionFit, DecompositionOptions,
};
pub use majorize::majorizes;
pub use quadrature::{integrate_adaptive, Integral};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerance::is_half;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostModel {
    /// `c(x) = x^p` with `0 < p < 1`.
    Power { p: f64 },
    /// Monotone piecewise-linear interpolation of concave samples.
    Tabulated(CostTable),
}

/// Samples `(x_i, c(x_i))` of a concave nondecreasing function with `c(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableSamples")]
pub struct CostTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Deserialize)]
struct TableSamples {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TryFrom<TableSamples> for CostTable {
    type Error = Error;

    fn try_from(t: TableSamples) -> Result<Self> {
        CostTable::new(t.xs, t.ys)
    }
}

impl CostTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::invalid(
                "cost table needs at least two (x, y) samples of equal length",
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("cost table contains a non-finite sample"));
        }
        if xs[0] != 0.0 || ys[0] != 0.0 {
            return Err(Error::invalid("cost table must start at (0, 0)"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("cost table abscissae must be strictly increasing"));
        }
        if ys.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("tabulated cost must be nondecreasing"));
        }
        let slopes: Vec<f64> = xs
            .windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect();
        let scale = slopes.iter().fold(0.0f64, |a, s| a.max(s.abs())).max(1.0);
        if let Some(w) = slopes.windows(2).find(|w| w[1] > w[0] + 1e-12 * scale) {
            return Err(Error::invalid(format!(
                "tabulated cost is not concave: slope increases from {} to {}",
                w[0], w[1]
            )));
        }
        Ok(Self { xs, ys })
    }

    pub fn max_x(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Piecewise-linear value; saturates beyond the last sample.
    fn interpolate(&self, x: f64) -> f64 {
        if x >= self.max_x() {
            return *self.ys.last().unwrap();
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
    }
}

impl CostModel {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("power cost needs 0 < p < 1, got {p}")));
        }
        Ok(CostModel::Power { p })
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        CostTable::new(xs, ys).map(CostModel::Tabulated)
    }

    /// The exponent of a power cost.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            CostModel::Power { p } => Some(*p),
            CostModel::Tabulated(_) => None,
        }
    }

    /// `c(|m|)`, rejecting queries outside a table's range.
    pub fn evaluate(&self, m: f64) -> Result<f64> {
        if let CostModel::Tabulated(t) = self {
            if m.abs() > t.max_x() {
                return Err(Error::TableRange {
                    query: m,
                    max: t.max_x(),
                });
            }
        }
        Ok(self.c(m))
    }

    /// `c(|m|)` without range checking. A table is extended by its last value,
    /// which keeps the extension concave and nondecreasing.
    pub fn c(&self, m: f64) -> f64 {
        let x = m.abs();
        if x == 0.0 {
            return 0.0;
        }
        match self {
            CostModel::Power { p } => x.powf(*p),
            CostModel::Tabulated(t) => t.interpolate(x),
        }
    }

    pub fn c2(&self, m: f64) -> f64 {
        let v = self.c(m);
        v * v
    }

    /// Checks that every mass up to `max_mass` lies in the model's domain.
    pub fn ensure_covers(&self, max_mass: f64) -> Result<()> {
        self.evaluate(max_mass).map(|_| ())
    }
}

/// `c(m1) + c(m2) - c(m1 + m2)`; nonnegative for every valid cost model.
pub fn subadditivity_check(cost: &CostModel, m1: f64, m2: f64) -> f64 {
    cost.c(m1) + cost.c(m2) - cost.c(m1 + m2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityVerdict {
    pub strictly_convex: bool,
    /// Where strict convexity of `(c²)'` fails, when it does.
    pub witness: Option<f64>,
}

/// Whether `(c²)'` is strictly convex on `(0, ∞)`.
///
/// For `x^p` the derivative is `2p x^{2p-1}`, strictly convex exactly when
/// `p < 1/2`. Tables are probed by finite differences on a uniform grid.
pub fn squared_cost_derivative_is_strictly_convex(cost: &CostModel) -> ConvexityVerdict {
    match cost {
        CostModel::Power { p } => {
            if is_half(*p) || *p > 0.5 {
                ConvexityVerdict {
                    strictly_convex: false,
                    witness: Some(1.0),
                }
            } else {
                ConvexityVerdict {
                    strictly_convex: true,
                    witness: None,
                }
            }
        }
        CostModel::Tabulated(t) => {
            const N: usize = 512;
            let h = t.max_x() / N as f64;
            let c2 = |x: f64| {
                let v = t.interpolate(x);
                v * v
            };
            // (c²)' at cell midpoints
            let g: Vec<f64> = (0..N)
                .map(|i| (c2((i + 1) as f64 * h) - c2(i as f64 * h)) / h)
                .collect();
            let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
            for i in 1..N - 1 {
                let second = g[i + 1] - 2.0 * g[i] + g[i - 1];
                if second <= 1e-12 * scale {
                    return ConvexityVerdict {
                        strictly_convex: false,
                        witness: Some((i as f64 + 0.5) * h),
                    };
                }
            }
            ConvexityVerdict {
                strictly_convex: true,
                witness: None,
            }
        }
    }
}
