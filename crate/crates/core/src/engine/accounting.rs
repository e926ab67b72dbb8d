//! Per-query cost and latency accounting.
//!
//! ```text
//! c_sys = overhead_cost       + Σ agent cost    + arbitration_cost(N)
//! l_sys = overhead_latency_ms + max agent latency + arbitration_latency(N)
//! ```

use serde::{Deserialize, Serialize};

use crate::agents::CandidateResponse;

/// A non-negative function of the ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalingFn {
    Constant { value: f64 },
    Linear { per_agent: f64 },
    Affine { base: f64, per_agent: f64 },
}

impl ScalingFn {
    pub fn eval(&self, n: usize) -> f64 {
        match *self {
            ScalingFn::Constant { value } => value,
            ScalingFn::Linear { per_agent } => per_agent * n as f64,
            ScalingFn::Affine { base, per_agent } => base + per_agent * n as f64,
        }
    }

    fn is_valid(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match *self {
            ScalingFn::Constant { value } => ok(value),
            ScalingFn::Linear { per_agent } => ok(per_agent),
            ScalingFn::Affine { base, per_agent } => ok(base) && ok(per_agent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountingParams {
    #[serde(default)]
    pub overhead_cost: f64,
    #[serde(default)]
    pub overhead_latency_ms: f64,
    #[serde(default = "zero_fn")]
    pub arbitration_cost: ScalingFn,
    #[serde(default = "zero_fn")]
    pub arbitration_latency: ScalingFn,
}

fn zero_fn() -> ScalingFn {
    ScalingFn::Constant { value: 0.0 }
}

impl Default for AccountingParams {
    fn default() -> Self {
        Self {
            overhead_cost: 0.0,
            overhead_latency_ms: 0.0,
            arbitration_cost: zero_fn(),
            arbitration_latency: zero_fn(),
        }
    }
}

impl AccountingParams {
    /// Returns the name of the first invalid field, if any.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.overhead_cost) {
            return Err((
                "overhead_cost",
                format!("must be >= 0, got {}", self.overhead_cost),
            ));
        }
        if !ok(self.overhead_latency_ms) {
            return Err((
                "overhead_latency_ms",
                format!("must be >= 0, got {}", self.overhead_latency_ms),
            ));
        }
        if !self.arbitration_cost.is_valid() {
            return Err(("arbitration_cost", "coefficients must be >= 0".into()));
        }
        if !self.arbitration_latency.is_valid() {
            return Err(("arbitration_latency", "coefficients must be >= 0".into()));
        }
        Ok(())
    }
}

/// Total cost of answering one query with `candidates`.
pub fn cost_of(candidates: &[CandidateResponse], params: &AccountingParams) -> f64 {
    let agents: f64 = candidates.iter().map(|c| c.cost).sum();
    params.overhead_cost + agents + params.arbitration_cost.eval(candidates.len())
}

/// Latency of one query; agents run in parallel so only the slowest counts.
pub fn latency_of(candidates: &[CandidateResponse], params: &AccountingParams) -> f64 {
    let slowest = candidates.iter().map(|c| c.latency_ms).fold(0.0, f64::max);
    params.overhead_latency_ms + slowest + params.arbitration_latency.eval(candidates.len())
}
