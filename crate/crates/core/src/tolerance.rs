use serde::{Deserialize, Serialize};

/// Every numerical threshold used by validation and certification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance for divergence residuals and point coincidence.
    pub relative: f64,
    /// Absolute tolerance on certificate slacks and balance residuals.
    pub certificate: f64,
    /// Absolute tolerance on pairwise satisfactory slacks.
    pub satisfactory: f64,
    /// Relative tolerance on the balance of total masses.
    pub mass_balance: f64,
    /// Permit distinct vertices that share coordinates.
    pub allow_coincident: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            relative: 1e-9,
            certificate: 1e-10,
            satisfactory: 1e-10,
            mass_balance: 1e-12,
            allow_coincident: false,
        }
    }
}

/// Exponents within this distance of one half are treated as exactly one half.
pub const HALF_TIE: f64 = 1e-15;

pub fn is_half(p: f64) -> bool {
    (p - 0.5).abs() <= HALF_TIE
}
