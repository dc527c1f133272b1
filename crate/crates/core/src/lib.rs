//! Tools for the finite Gilbert–Steiner problem with concave cost `c(x) = x^p`.
//!
//! The crate evaluates and validates flows between atomic measures, checks the
//! local branching conditions at a branching point, certifies global
//! optimality of star-shaped flows, constructs explicit high-degree branching
//! examples, and solves small instances exactly by enumerating tree topologies.
//!
//! Module map:
//! - [`model`]: measures, instances, flows and the Gilbert functional.
//! - [`cost`]: cost models, their analytic predicates, majorization, and the
//!   power-law integral decomposition check.
//! - [`fermat`]: weighted Fermat–Torricelli points, the triple angle law and
//!   the tripod improvement test.
//! - [`config`]: satisfactory configurations and degree bounds.
//! - [`certify`]: subset certificates for star flows.
//! - [`gallery`]: constructors for the explicit examples.
//! - [`optimizer`]: topology enumeration and geometric relaxation.
//! - [`io`] and [`svg`]: the `branchflow/1` JSON formats and SVG rendering.

pub mod certify;
pub mod config;
pub mod cost;
pub mod error;
pub mod fermat;
pub mod gallery;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod svg;
pub mod tolerance;
pub mod vector;

pub use cost::CostModel;
pub use error::{Error, Result};

pub use model::{
    gilbert_functional, is_forest, validate_flow, Atom, AtomicMeasure, Edge, Flow, FlowCost, TransportInstance,
    ValidationReport, Vertex, VertexKind,
};

pub use certify::{certify_star, CertifyMode, StarCertificate, StarInstance, Verdict};
pub use config::{satisfactory_slack, search_satisfactory, DegreeBound, SlackMatrix, StarConfiguration};
pub use fermat::{triple_angles, tripod_test, weighted_fermat, FermatPoint, WeightedPoints};
pub use optimizer::{enumerate_topologies, relax_geometry, solve, SolveReport, Topology};
pub use tolerance::Tolerances;
pub use vector::Point;
