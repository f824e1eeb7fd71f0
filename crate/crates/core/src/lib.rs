//! Optimal multi-selection mechanisms for local and geographic differential
//! privacy.
//!
//! A user perturbs a one-dimensional (or circular) private value, the server
//! returns k candidate results, and the user keeps the best one. This crate
//! computes the optimal noise and result offsets, their exact costs, and
//! independent brute-force / dual certificates of optimality:
//!
//! - [`density`]: piecewise-exponential densities with exact integration,
//!   sampling, analytic privacy checks and the two structural
//!   transformations (projection onto +/-eps rates, space removal).
//! - [`line_mech`]: Laplace noise on the line with closed-form and
//!   recurrence-based optimal offsets.
//! - [`ring_mech`]: the optimal local-DP mechanism on the circle and the
//!   geographic k = 2 parametric study.
//! - [`mhr`]: quantile placement for fixed log-concave noise.
//! - [`dual`]: the dual ODE certificate with its phase change in the dual
//!   objective.
//! - [`oracle`]: brute-force search and Monte Carlo estimates certifying
//!   every optimality claim.
//! - [`protocol`]: the client/server simulation, NDJSON wire format, and an
//!   empirical privacy auditor.

pub mod density;
pub mod disutility;
pub mod dual;
pub mod error;
pub mod line_mech;
pub mod mechanism;
pub mod mhr;
pub mod offsets;
pub mod oracle;
pub mod protocol;
pub mod quad;
pub mod ring_mech;
pub mod rng;

pub use density::{Domain, ExpSegment, PiecewiseExpDensity, PrivacyMetric, PrivacyReport};
pub use disutility::DisutilityFn;
pub use error::{Error, Result};
pub use mechanism::MechanismConfig;
pub use offsets::OffsetSet;
pub use rng::Rng;
