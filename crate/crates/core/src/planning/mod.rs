//! SLA-driven ensemble planning.
//!
//! Given an intent, a composite SLA and the operating environment, the
//! planner enumerates candidate ensembles from a search space, estimates
//! each one's QoS (calibration table first, estimator fallback second),
//! keeps the ones whose estimate meets every objective, and returns the
//! cheapest. Ties go to the smaller ensemble, then to the lexicographically
//! smaller fingerprint and member list.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::reasoner::ReasonerKind;
use crate::agents::AgentConfig;
use crate::arbitration::{ArbitrationKind, ArbitrationStrategy, Rounding};
use crate::dataset::IntentLabel;
use crate::engine::accounting::AccountingParams;
use crate::evalsim::metrics::IrrDenominator;
use crate::evalsim::simulate::{monte_carlo, ScorerModel, SimAccounting, SimulationSpec};
use crate::rng::derive_seed;
use crate::sla::{evaluate_slo, CompositeSla, Observations, QosKind};

pub mod calibration;
pub mod intent;

pub use calibration::{CalibrationEntry, CalibrationError, CalibrationTable, Fingerprint};
pub use intent::{
    classify_intent, IntentClassifier, IntentRule, IntentRulePack, IntentRulePackConfig,
};

/// Runtime conditions that constrain which ensembles can be deployed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// Store labels currently reachable; agents needing anything else are excluded.
    pub available_stores: BTreeSet<String>,
    #[serde(default = "yes")]
    pub external_api_up: bool,
    #[serde(default = "yes")]
    pub local_model_available: bool,
    /// Scales every predicted per-query cost, e.g. for a price change.
    #[serde(default = "one")]
    pub cost_multiplier: f64,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

impl Environment {
    pub fn new(available_stores: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            available_stores: available_stores.into_iter().map(Into::into).collect(),
            external_api_up: true,
            local_model_available: true,
            cost_multiplier: 1.0,
        }
    }

    /// Whether every resource `agent` depends on is currently usable.
    pub fn admits(&self, agent: &AgentConfig) -> bool {
        let stores_ok = agent.data_source_policy.is_subset(&self.available_stores)
            && agent
                .source_labels()
                .iter()
                .all(|s| self.available_stores.contains(*s));
        let model_ok = match agent.reasoner {
            ReasonerKind::ExternalHttp => self.external_api_up,
            ReasonerKind::OracleReplay | ReasonerKind::CalibratedStochastic => {
                self.local_model_available
            }
        };
        stores_ok && model_ok
    }
}

/// The grid the planner searches: ensembles named by agent ids from the
/// pool, crossed with arbitration thresholds and kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub ensembles: Vec<Vec<String>>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub arbitration_kinds: Vec<ArbitrationKind>,
    #[serde(default)]
    pub rounding: Rounding,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.5]
}

fn default_kinds() -> Vec<ArbitrationKind> {
    ArbitrationKind::ALL.to_vec()
}

impl SearchSpace {
    pub fn new(ensembles: Vec<Vec<String>>) -> Self {
        Self {
            ensembles,
            thresholds: default_thresholds(),
            arbitration_kinds: default_kinds(),
            rounding: Rounding::Floor,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ensembles.iter().all(Vec::is_empty)
            || self.thresholds.is_empty()
            || self.arbitration_kinds.is_empty()
    }
}

/// A concrete, runnable ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub agents: Vec<AgentConfig>,
    pub arbitration: ArbitrationStrategy,
    pub fingerprint: Fingerprint,
}

impl EnsembleConfig {
    pub fn new(agents: Vec<AgentConfig>, arbitration: ArbitrationStrategy) -> Self {
        let fingerprint = Fingerprint::new(
            agents.iter().map(|a| a.strategy.kind).collect(),
            arbitration.threshold,
            arbitration.kind,
        );
        Self {
            agents,
            arbitration,
            fingerprint,
        }
    }

    pub fn member_ids(&self) -> Vec<&str> {
        self.agents.iter().map(|a| a.agent_id.as_str()).collect()
    }
}

/// The chosen ensemble and the QoS it is predicted to deliver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub intent: IntentLabel,
    pub ensemble: EnsembleConfig,
    pub predicted: Observations,
    /// Candidates that had an estimate, feasible or not.
    pub considered: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("intent `{0}` is not answered by the ensemble")]
    UnsupportedIntent(IntentLabel),
    #[error("the search space has no ensembles, thresholds or arbitration kinds")]
    EmptySearchSpace,
    #[error("search space references unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("no configuration meets the SLA ({considered} estimated, {excluded} excluded by the environment, {unestimated} without an estimate)")]
    InfeasibleSla {
        considered: usize,
        excluded: usize,
        unestimated: usize,
    },
    #[error("no estimate for `{0}`")]
    EstimationUnavailable(String),
}

/// Fallback QoS predictor for ensembles missing from the calibration table.
pub trait Estimator: Send + Sync {
    fn estimate(&self, ensemble: &EnsembleConfig) -> Result<Observations, PlanError>;
}

/// Estimates QoS by simulating the ensemble from its agents' profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimator {
    pub trials: u64,
    pub seed: u64,
    pub scorer_model: ScorerModel,
    pub p_global_context: f64,
    pub irr: IrrDenominator,
    pub accounting: AccountingParams,
}

impl MonteCarloEstimator {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            scorer_model: ScorerModel::Uniform,
            p_global_context: 1.0,
            irr: IrrDenominator::AnswersProvided,
            accounting: AccountingParams::default(),
        }
    }
}

impl Estimator for MonteCarloEstimator {
    fn estimate(&self, ensemble: &EnsembleConfig) -> Result<Observations, PlanError> {
        let key = ensemble.fingerprint.key();
        let unavailable = || PlanError::EstimationUnavailable(key.clone());
        let profiles = ensemble
            .agents
            .iter()
            .map(|a| a.profile)
            .collect::<Option<Vec<_>>>();
        let profiles = profiles.ok_or_else(unavailable)?;
        let n = profiles.len();
        let mut spec = SimulationSpec::new(profiles, ensemble.arbitration, self.scorer_model);
        spec.trials = self.trials;
        spec.seed = derive_seed(self.seed, &[&key]);
        spec.p_global_context = self.p_global_context;
        spec.irr = self.irr;
        spec.accounting = Some(SimAccounting {
            agent_costs: ensemble.agents.iter().map(|a| a.cost_per_call).collect(),
            latency_models: ensemble
                .agents
                .iter()
                .map(|a| a.latency_model.clone())
                .collect(),
            params: self.accounting,
        });
        let result = monte_carlo(&spec, n).map_err(|_| unavailable())?;
        let m = &result.metrics;
        let mut obs = Observations::from([
            (QosKind::Precision, m.precision),
            (QosKind::Recall, m.recall),
            (QosKind::F1, m.f1),
            (QosKind::HallucinationRate, m.hallucination_rate),
            (
                QosKind::IncongruentResponseRate,
                m.incongruent_response_rate,
            ),
        ]);
        if let Some(c) = result.mean_cost {
            obs.insert(QosKind::CostPerQuery, c);
        }
        if let Some(l) = result.p50_latency_ms {
            obs.insert(QosKind::LatencyP50, l);
        }
        let slowest = ensemble
            .agents
            .iter()
            .map(|a| a.latency_model.upper_bound())
            .fold(0.0, f64::max);
        obs.insert(
            QosKind::LatencyMax,
            self.accounting.overhead_latency_ms
                + slowest
                + self.accounting.arbitration_latency.eval(n),
        );
        Ok(obs)
    }
}

/// QoS estimate for one ensemble: the calibration entry when present,
/// otherwise the fallback estimator.
pub fn estimate_config(
    ensemble: &EnsembleConfig,
    calibration: &CalibrationTable,
    fallback: Option<&dyn Estimator>,
) -> Result<Observations, PlanError> {
    if let Some(entry) = calibration.get(&ensemble.fingerprint) {
        return Ok(entry.observations.clone());
    }
    match fallback {
        Some(est) => est.estimate(ensemble),
        None => Err(PlanError::EstimationUnavailable(ensemble.fingerprint.key())),
    }
}

/// Everything the planner needs besides the per-call inputs.
#[derive(Clone)]
pub struct Planner {
    pub pool: Vec<AgentConfig>,
    pub space: SearchSpace,
    pub calibration: CalibrationTable,
    pub fallback: Option<Arc<dyn Estimator>>,
}

impl Planner {
    pub fn plan(
        &self,
        intent: IntentLabel,
        sla: &CompositeSla,
        env: &Environment,
    ) -> Result<Plan, PlanError> {
        plan(
            intent,
            sla,
            env,
            &self.pool,
            &self.space,
            &self.calibration,
            self.fallback.as_deref(),
        )
    }
}

/// Expands the search space into concrete ensembles, deduplicated by
/// (fingerprint, members), in grid order.
pub fn enumerate_candidates(
    pool: &[AgentConfig],
    space: &SearchSpace,
) -> Result<Vec<EnsembleConfig>, PlanError> {
    let by_id: BTreeMap<&str, &AgentConfig> =
        pool.iter().map(|a| (a.agent_id.as_str(), a)).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for ids in space.ensembles.iter().filter(|e| !e.is_empty()) {
        let agents = ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|a| (*a).clone())
                    .ok_or_else(|| PlanError::UnknownAgent(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for &t in &space.thresholds {
            for &kind in &space.arbitration_kinds {
                let Ok(strategy) = ArbitrationStrategy::new(kind, t, space.rounding) else {
                    continue;
                };
                let cfg = EnsembleConfig::new(agents.clone(), strategy);
                if seen.insert((cfg.fingerprint.key(), ids.clone())) {
                    out.push(cfg);
                }
            }
        }
    }
    Ok(out)
}

/// Picks the cheapest ensemble predicted to satisfy `sla` under `env`.
pub fn plan(
    intent: IntentLabel,
    sla: &CompositeSla,
    env: &Environment,
    pool: &[AgentConfig],
    space: &SearchSpace,
    calibration: &CalibrationTable,
    fallback: Option<&dyn Estimator>,
) -> Result<Plan, PlanError> {
    if intent != IntentLabel::DirectlyAnswerable {
        return Err(PlanError::UnsupportedIntent(intent));
    }
    if space.is_empty() {
        return Err(PlanError::EmptySearchSpace);
    }
    let candidates = enumerate_candidates(pool, space)?;
    let (mut considered, mut excluded, mut unestimated) = (0, 0, 0);
    let mut best: Option<(f64, String, Vec<String>, EnsembleConfig, Observations)> = None;
    for cfg in candidates {
        if !cfg.agents.iter().all(|a| env.admits(a)) {
            excluded += 1;
            continue;
        }
        let mut predicted = match estimate_config(&cfg, calibration, fallback) {
            Ok(o) => o,
            Err(_) => {
                unestimated += 1;
                continue;
            }
        };
        considered += 1;
        if let Some(c) = predicted.get_mut(&QosKind::CostPerQuery) {
            *c *= env.cost_multiplier;
        }
        let feasible = evaluate_slo(&predicted, sla)
            .map(|r| r.overall)
            .unwrap_or(false);
        if !feasible {
            continue;
        }
        let cost = predicted
            .get(&QosKind::CostPerQuery)
            .copied()
            .unwrap_or(f64::INFINITY);
        let key = cfg.fingerprint.key();
        let members: Vec<String> = cfg.member_ids().into_iter().map(String::from).collect();
        let better = match &best {
            None => true,
            Some((bc, bk, bm, bcfg, _)) => cost
                .total_cmp(bc)
                .then(cfg.agents.len().cmp(&bcfg.agents.len()))
                .then_with(|| key.cmp(bk))
                .then_with(|| members.cmp(bm))
                .is_lt(),
        };
        if better {
            best = Some((cost, key, members, cfg, predicted));
        }
    }
    match best {
        Some((_, _, _, ensemble, predicted)) => Ok(Plan {
            intent,
            ensemble,
            predicted,
            considered,
        }),
        None => Err(PlanError::InfeasibleSla {
            considered,
            excluded,
            unestimated,
        }),
    }
}
