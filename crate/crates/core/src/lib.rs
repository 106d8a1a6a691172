//! Model-free no-arbitrage price bounds and optimal semi-static hedges for
//! lookback and forward-start lookback options, given the marginal law(s) of
//! the underlying implied by European call prices.
//!
//! The closed-form bound (a Hardy-Littlewood expectation) is cross-validated
//! two independent ways: a Monte Carlo simulator of the extremal embedding
//! verifies it from below, and a finite-difference solver for the dual
//! stochastic-control problem verifies it from above.
//!
//! All numerics are generic over the scalar type via [`num::Real`]; the
//! `*64` aliases at the crate root fix `f64`, which is what the CLI and the
//! acceptance suite use.

pub mod curve;
pub mod dual;
pub mod embedding;
pub mod error;
pub mod formats;
pub mod forward;
pub mod lookback;
pub mod marginals;
pub mod num;
pub mod payoff;
pub mod quad;

pub use error::{Error, Result};

/// `f64` marginal law.
pub type Marginal64 = marginals::Marginal<f64>;
/// `f64` payoff.
pub type Payoff64 = payoff::Payoff<f64>;
/// `f64` monotone curve.
pub type MonotoneCurve64 = curve::MonotoneCurve<f64>;
/// `f64` convex static hedge.
pub type ConvexHedge64 = lookback::ConvexHedge<f64>;
/// `f64` lookback bound report.
pub type BoundReport64 = lookback::BoundReport<f64>;
/// `f64` forward-start bound report.
pub type ForwardBoundReport64 = forward::ForwardBoundReport<f64>;
/// `f64` simulation configuration.
pub type SimulationConfig64 = embedding::SimulationConfig<f64>;
/// `f64` dual grid.
pub type StoppingGrid64 = dual::StoppingGrid<f64>;
/// `f64` dual solution.
pub type DualSolution64 = dual::DualSolution<f64>;
