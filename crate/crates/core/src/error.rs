//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by mechanism construction, density operations and the
/// protocol layer. Numeric diagnostics that are *reports* rather than
/// failures (privacy reports, audit results) carry their findings in ordinary
/// return values instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("k must be >= 1, got {0}")]
    InvalidK(i64),

    #[error("offset set must be nonempty")]
    EmptyOffsets,

    #[error("line tail on {side} has rate {rate} of the wrong sign; not integrable")]
    NonIntegrableTail { side: &'static str, rate: f64 },

    #[error("segments do not tile the domain: {0}")]
    GapOrOverlap(String),

    #[error("density fails the epsilon-geographic privacy check (worst log ratio {worst})")]
    PrivacyViolated { worst: f64 },

    #[error("space removal endpoints differ: rho({a}) = {rho_a} vs rho({b}) = {rho_b}")]
    EndpointMismatch { a: f64, b: f64, rho_a: f64, rho_b: f64 },

    #[error("golden-section search failed to bracket a minimum (best at {at})")]
    NonConvergent { at: f64 },

    #[error("ODE local error {err} exceeds 1e-8 at r = {r}; reduce the step size")]
    StepTooLarge { r: f64, err: f64 },

    #[error("derivative at zero must be positive, got {0}")]
    NonPositiveDerivative(f64),

    #[error("value {value} outside the {domain} domain")]
    DomainMismatch { domain: &'static str, value: f64 },

    #[error("audit bin has only {count} samples (need >= {need}); use fewer bins or more samples")]
    InsufficientCounts { count: u64, need: u64 },

    #[error("quantile placement bound violated at K = {k}: phi = {phi} > {bound}")]
    BoundViolated { k: usize, phi: f64, bound: f64 },

    #[error("malformed wire message: {0}")]
    WireFormat(String),

    #[error("operation requires the {0} domain")]
    UnsupportedDomain(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
