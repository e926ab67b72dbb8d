//! Metrics, Monte Carlo simulation, exact ensemble enumeration, and
//! report rows.

pub mod metrics;
pub mod report;
pub mod simulate;

pub use metrics::{
    compute_metrics, f1, IrrDenominator, MetricCounts, MetricsError, MetricsReport, QueryOutcome,
};
pub use simulate::{
    brute_force_ensemble_oracle, monte_carlo, ScorerModel, SimError, SimulationResult,
    SimulationSpec,
};
