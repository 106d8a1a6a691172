//! On-disk formats: JSON spec files for marginals and payoffs, and the JSON
//! report schemas emitted by the command-line front end. Every artifact
//! embeds `schema_version` and re-parses under the same schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::TailInfo;
use crate::{Marginal64, Payoff64};

pub const SCHEMA_VERSION: u32 = 1;

/// Marginal spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    Atoms { atoms: Vec<(f64, f64)> },
    CallCurve { strikes: Vec<f64>, prices: Vec<f64> },
    Lognormal { mean: f64, vol: f64, horizon: f64 },
}

impl MarginalSpec {
    pub fn build(&self) -> Result<Marginal64> {
        match self {
            MarginalSpec::Atoms { atoms } => Marginal64::from_atoms(atoms.clone()),
            MarginalSpec::CallCurve { strikes, prices } => {
                Marginal64::from_call_curve(strikes.clone(), prices.clone())
            }
            MarginalSpec::Lognormal { mean, vol, horizon } => {
                Marginal64::lognormal(*mean, *vol, *horizon)
            }
        }
    }
}

/// Payoff spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffSpec {
    Identity,
    Power {
        p: f64,
    },
    SmoothedCall {
        strike: f64,
        eps: f64,
    },
    Tabulated {
        knots: Vec<(f64, f64, f64)>,
    },
}

impl PayoffSpec {
    pub fn build(&self) -> Result<Payoff64> {
        match self {
            PayoffSpec::Identity => Ok(Payoff64::identity()),
            PayoffSpec::Power { p } => Payoff64::power(*p),
            PayoffSpec::SmoothedCall { strike, eps } => Payoff64::smoothed_call(*strike, *eps),
            PayoffSpec::Tabulated { knots } => Payoff64::tabulated(knots.clone()),
        }
    }
}

/// Parses a marginal spec, pointing at the offending field on failure.
pub fn parse_marginal(json: &str) -> Result<Marginal64> {
    let spec: MarginalSpec = serde_json::from_str(json).map_err(|e| Error::InvalidMarginal {
        field: "spec".into(),
        reason: e.to_string(),
    })?;
    spec.build()
}

/// Parses a payoff spec, pointing at the offending field on failure.
pub fn parse_payoff(json: &str) -> Result<Payoff64> {
    let spec: PayoffSpec = serde_json::from_str(json).map_err(|e| Error::InvalidPayoff {
        field: "spec".into(),
        reason: e.to_string(),
    })?;
    spec.build()
}

/// Lookback bound report artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReportFile {
    pub schema_version: u32,
    pub kind: String,
    pub bound: f64,
    pub static_leg: f64,
    pub dynamic_leg: f64,
    pub decomposition_gap: f64,
    pub quad_error: f64,
    pub truncation: Option<TailInfo<f64>>,
}

/// Forward-start bound report artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForwardReportFile {
    pub schema_version: u32,
    pub kind: String,
    pub bound: f64,
    pub bound_second_form: f64,
    pub form_gap: f64,
    pub quad_error: f64,
}

/// One named check with its measured value and threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Monte Carlo verification artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReportFile {
    pub schema_version: u32,
    pub kind: String,
    pub bound: f64,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub capped_fraction: f64,
    pub ks_x_tau: f64,
    pub ks_m_tau: f64,
    pub martingale_mean: f64,
    pub martingale_se: f64,
    pub primal_mean: f64,
    pub primal_se: f64,
    pub dt_bias_allowance: f64,
    pub slack_min: f64,
    pub slack_p1: f64,
    pub slack_p5: f64,
    pub slack_p50: f64,
    pub slack_mean: f64,
    pub slack_se: f64,
    pub slack_tolerance: f64,
    pub slack_fraction_below: f64,
    pub max_abs_delta: f64,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

/// Dual solver artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualReportFile {
    pub schema_version: u32,
    pub kind: String,
    pub bound: f64,
    pub grid_nodes: usize,
    pub grid_spacing: f64,
    pub value_at_lambda_star: f64,
    pub minimized_value: f64,
    pub gap: f64,
    pub converged: bool,
    pub scheme_residual: f64,
}
