//! Numerical check of the power-law integral representation of `x^p`.
//!
//! With density `x^{-2p-1}`, the integral
//! `I(t) = ∫₀^∞ sin²(tx) x^{-2p-1} dx` scales like `t^{2p}`, so
//! `sqrt(I(t))` is proportional to `t^p`. The fitted log-log slope of `I`
//! must therefore be `2p`.
//!
//! The head `[0, 1/t]` is summed from the Taylor series of `sin²`. On the
//! tail, `sin² = 1/2 - cos(2tx)/2`: the mean part is exact, the oscillatory
//! part is integrated adaptively up to a cutoff where `2tX ≥ 400`, and the
//! remainder beyond the cutoff comes from the integration-by-parts expansion,
//! whose first omitted term bounds the truncation error.

use num_complex::Complex64;
use serde::Serialize;

use super::quadrature::integrate_adaptive;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionOptions {
    /// Relative accuracy target for each `I(t)`.
    pub rel_tol: f64,
    /// Subinterval budget of the adaptive rule.
    pub max_pieces: usize,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_pieces: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionFit {
    pub p: f64,
    /// Least-squares slope of `ln I(t)` against `ln t`.
    pub slope: f64,
    pub intercept: f64,
    /// `(t, I(t))` pairs.
    pub samples: Vec<(f64, f64)>,
}

/// Oscillation count (in radians of `2tx`) after which the asymptotic tail is used.
const CUTOFF_PHASE: f64 = 400.0;

fn head_series(p: f64) -> f64 {
    // Σ_k (-1)^{k+1} 2^{2k-1} / ((2k)! (2k - 2p))
    let mut sum = 0.0;
    let mut coeff = 1.0; // 2^{2k-1}/(2k)! at k = 1
    for k in 1..40 {
        let kf = k as f64;
        let term = coeff / (2.0 * kf - 2.0 * p);
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 * sum.abs() {
            break;
        }
        coeff *= 4.0 / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
    }
    sum
}

/// `Re ∫_X^∞ e^{iωx} x^{-α} dx` via `-e^{iωX} Σ_k (α)_k X^{-α-k} / (iω)^{k+1}`.
fn cosine_tail(omega: f64, alpha: f64, x: f64, tol: f64) -> Result<f64> {
    let inv_iw = Complex64::new(0.0, -1.0 / omega);
    let mut factor = inv_iw * x.powf(-alpha);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..60 {
        let mag = factor.norm();
        if mag > last {
            break;
        }
        sum += factor;
        last = mag;
        if mag <= tol {
            let phase = Complex64::new((omega * x).cos(), (omega * x).sin());
            return Ok((-phase * sum).re);
        }
        factor *= inv_iw * ((alpha + k as f64) / x);
    }
    Err(Error::Quadrature(format!(
        "asymptotic tail stalled at term size {last:e} (omega={omega}, X={x})"
    )))
}

/// `∫₀^∞ sin²(tx) x^{-2p-1} dx`.
pub fn decomposition_integral(p: f64, t: f64, opts: &DecompositionOptions) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("decomposition needs 0 < p < 1, got {p}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t must be positive, got {t}")));
    }
    let alpha = 2.0 * p + 1.0;
    let omega = 2.0 * t;
    let x0 = 1.0 / t;

    let head = t.powf(2.0 * p) * head_series(p);
    let mean = 0.5 * x0.powf(-2.0 * p) / (2.0 * p);
    let scale = head + mean;
    let abs_tol = opts.rel_tol * scale;

    let half_period = std::f64::consts::PI / omega;
    let pieces = ((CUTOFF_PHASE / omega - x0) / half_period).ceil().max(1.0);
    let x1 = x0 + pieces * half_period;
    let body = integrate_adaptive(
        |x| (omega * x).cos() * x.powf(-alpha),
        x0,
        x1,
        0.5 * abs_tol,
        0.0,
        opts.max_pieces,
    )?;
    let tail = cosine_tail(omega, alpha, x1, 0.1 * abs_tol)?;
    Ok(head + mean - 0.5 * (body.value + tail))
}

/// Fits the log-log slope of `I(t)` over `t_grid` with default precision.
pub fn decomposition_exponent(p: f64, t_grid: &[f64]) -> Result<DecompositionFit> {
    decomposition_exponent_with(p, t_grid, &DecompositionOptions::default())
}

pub fn decomposition_exponent_with(p: f64, t_grid: &[f64], opts: &DecompositionOptions) -> Result<DecompositionFit> {
    let mut ts: Vec<f64> = t_grid.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 3 {
        return Err(Error::invalid("t grid needs at least three distinct points"));
    }
    if ts[0] <= 0.0 || !ts[ts.len() - 1].is_finite() {
        return Err(Error::invalid("t grid must be positive and finite"));
    }
    if ts[ts.len() - 1] / ts[0] < 2.0 {
        return Err(Error::invalid("t grid must span at least a factor of two"));
    }
    let samples = t_grid
        .iter()
        .map(|&t| decomposition_integral(p, t, opts).map(|v| (t, v)))
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let (sx, sy) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, v)| (a + t.ln(), b + v.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in &samples {
        let dx = t.ln() - mx;
        sxy += dx * (v.ln() - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(DecompositionFit {
        p,
        slope,
        intercept: my - slope * mx,
        samples,
    })
}
