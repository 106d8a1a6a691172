//! Error type shared by all modules.

use thiserror::Error;

/// Library-wide error enumeration.
#[derive(Debug, Error)]
pub enum Error {
    /// An input scalar was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// A marginal law failed a construction invariant.
    #[error("invalid marginal ({field}): {reason}")]
    InvalidMarginal { field: String, reason: String },

    /// A payoff failed a construction invariant.
    #[error("invalid payoff ({field}): {reason}")]
    InvalidPayoff { field: String, reason: String },

    /// A monotone curve failed a construction invariant.
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    /// A convex hedge failed a construction invariant.
    #[error("invalid hedge: {0}")]
    InvalidHedge(String),

    /// Two marginals required to be in convex order are not.
    #[error("convex order violated at strike {witness}")]
    ConvexOrderViolated { witness: f64 },

    /// An improper integral failed its finiteness check.
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    /// An evaluation point left the admissible domain.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// Root bracketing failed (inconsistent inputs).
    #[error("no root in search bracket: {0}")]
    NoRoot(String),

    /// An iterative solver hit its iteration cap.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Too many Monte Carlo paths were force-stopped at the horizon cap.
    #[error("capped path fraction {fraction} exceeds {limit}")]
    ExcessiveCapped { fraction: f64, limit: f64 },

    /// A run configuration failed validation.
    #[error("invalid configuration ({field}): {reason}")]
    InvalidConfig { field: String, reason: String },
}

/// Convenience alias used throughout the crate.
pub type Result<V> = std::result::Result<V, Error>;
