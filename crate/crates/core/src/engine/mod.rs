//! The intent handler: classify, plan, fan out agents, arbitrate, account.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{run_agent, AgentEnv, AgentError, CandidateResponse, Reasoner};
use crate::arbitration::{arbitrate, ArbitrationError, ArbitrationOutcome, Decision};
use crate::dataset::{AnnotatedDataset, ContextAvailability, IntentLabel};
use crate::evalsim::metrics::{
    compute_metrics, IrrDenominator, MetricsError, MetricsReport, QueryOutcome,
};
use crate::evalsim::simulate::percentile_nearest_rank;
use crate::planning::{EnsembleConfig, Environment, IntentClassifier, Plan, PlanError, Planner};
use crate::registry::Registry;
use crate::retrieval::DocumentStore;
use crate::rng::{agent_stream, arbitration_stream};
use crate::scoring::RelevanceScorer;
use crate::sla::CompositeSla;

pub mod accounting;

use accounting::{cost_of, latency_of, AccountingParams};

/// Where the engine gets its ensemble from.
#[derive(Clone)]
pub enum EnsembleSource {
    Fixed(EnsembleConfig),
    Planned(Planner),
}

/// Everything one query's execution produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub fingerprint: String,
    pub candidates: Vec<CandidateResponse>,
    pub outcome: ArbitrationOutcome,
    pub c_sys: f64,
    pub l_sys_ms: f64,
    /// Whether any context held the answer, when known.
    pub global_context_hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum QueryResult {
    Traced(ExecutionTrace),
    Unsupported,
    Failed { error: String },
}

/// One line of a run's trace output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub query: String,
    pub intent: IntentLabel,
    #[serde(flatten)]
    pub result: QueryResult,
}

impl QueryRecord {
    pub fn trace(&self) -> Option<&ExecutionTrace> {
        match &self.result {
            QueryResult::Traced(t) => Some(t),
            _ => None,
        }
    }

    /// The metric-level view of a traced query; `None` otherwise.
    pub fn outcome(&self) -> Option<QueryOutcome> {
        let t = self.trace()?;
        let selected = t.outcome.selected.as_ref();
        Some(QueryOutcome {
            query_id: self.query_id.clone(),
            global_context_hit: t.global_context_hit.unwrap_or(false),
            answered: t.outcome.decision == Decision::Answered,
            quality: selected
                .and_then(|c| c.truth)
                .and_then(|a| a.answer_quality),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Arbitration(#[from] ArbitrationError),
}

pub struct Engine {
    pub classifier: Arc<dyn IntentClassifier>,
    pub sla: CompositeSla,
    pub environment: Environment,
    pub ensemble: EnsembleSource,
    pub stores: BTreeMap<String, DocumentStore>,
    pub dataset: Option<Arc<AnnotatedDataset>>,
    pub reasoners: Registry<dyn Reasoner>,
    pub scorer: Arc<dyn RelevanceScorer>,
    pub accounting: AccountingParams,
    pub seed: u64,
    pub top_k_per_vertical: usize,
    pub prompt_template: String,
    pub refusal_marker: String,
    plan: OnceLock<Result<Arc<EnsembleConfig>, PlanError>>,
}

impl Engine {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        classifier: Arc<dyn IntentClassifier>,
        sla: CompositeSla,
        environment: Environment,
        ensemble: EnsembleSource,
        stores: BTreeMap<String, DocumentStore>,
        reasoners: Registry<dyn Reasoner>,
        scorer: Arc<dyn RelevanceScorer>,
        seed: u64,
    ) -> Self {
        Self {
            classifier,
            sla,
            environment,
            ensemble,
            stores,
            dataset: None,
            reasoners,
            scorer,
            accounting: AccountingParams::default(),
            seed,
            top_k_per_vertical: 5,
            prompt_template: crate::agents::prompt::DEFAULT_TEMPLATE.to_string(),
            refusal_marker: crate::agents::prompt::DEFAULT_REFUSAL_MARKER.to_string(),
            plan: OnceLock::new(),
        }
    }

    pub fn with_dataset(mut self, dataset: Arc<AnnotatedDataset>) -> Self {
        self.dataset = Some(dataset);
        self
    }

    pub fn with_accounting(mut self, accounting: AccountingParams) -> Self {
        self.accounting = accounting;
        self
    }

    /// The full plan for answerable queries, when the ensemble is planned.
    pub fn plan_details(&self) -> Option<Result<Plan, PlanError>> {
        match &self.ensemble {
            EnsembleSource::Fixed(_) => None,
            EnsembleSource::Planned(p) => Some(p.plan(
                IntentLabel::DirectlyAnswerable,
                &self.sla,
                &self.environment,
            )),
        }
    }

    /// The ensemble serving directly answerable queries. Planning happens
    /// once; SLA, environment and calibration are fixed for an engine.
    pub fn ensemble(&self) -> Result<Arc<EnsembleConfig>, PlanError> {
        self.plan
            .get_or_init(|| match &self.ensemble {
                EnsembleSource::Fixed(cfg) => Ok(Arc::new(cfg.clone())),
                EnsembleSource::Planned(p) => p
                    .plan(
                        IntentLabel::DirectlyAnswerable,
                        &self.sla,
                        &self.environment,
                    )
                    .map(|plan| Arc::new(plan.ensemble)),
            })
            .clone()
    }

    fn agent_env(&self) -> AgentEnv<'_> {
        AgentEnv {
            stores: &self.stores,
            dataset: self.dataset.as_deref(),
            scorer: Some(self.scorer.as_ref()),
            reasoners: &self.reasoners,
            top_k_per_vertical: self.top_k_per_vertical,
            prompt_template: &self.prompt_template,
            refusal_marker: &self.refusal_marker,
        }
    }

    /// Runs one query end to end.
    ///
    /// Agents run concurrently, each on its own random stream, and the
    /// candidate set is put in agent-id order before arbitration, so the
    /// result does not depend on scheduling. A transport failure turns that
    /// agent's answer into a refusal; any other agent error fails the query.
    pub fn handle_query(
        &self,
        query_id: &str,
        query: &str,
    ) -> Result<(IntentLabel, QueryResult), EngineError> {
        let intent = self.classifier.classify(query);
        if intent != IntentLabel::DirectlyAnswerable {
            return Ok((intent, QueryResult::Unsupported));
        }
        let ensemble = self.ensemble()?;
        let env = self.agent_env();
        let mut candidates = ensemble
            .agents
            .par_iter()
            .map(|agent| {
                let mut rng = agent_stream(self.seed, &agent.agent_id, query_id);
                match run_agent(query_id, query, agent, &env, &mut rng) {
                    Err(AgentError::Transport(e)) => Ok(CandidateResponse {
                        cost: agent.cost_per_call,
                        latency_ms: agent.latency_model.upper_bound(),
                        note: Some(format!("transport: {e}")),
                        ..CandidateResponse::negative(&agent.agent_id)
                    }),
                    other => other,
                }
            })
            .collect::<Result<Vec<_>, AgentError>>()?;
        candidates.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));

        let mut rng = arbitration_stream(self.seed, query_id);
        let outcome = arbitrate(
            query,
            &candidates,
            &ensemble.arbitration,
            self.scorer.as_ref(),
            &mut rng,
            &self.accounting,
        )?;
        let global_context_hit = self
            .dataset
            .as_ref()
            .and_then(|d| d.global_context_hit(query_id))
            .or_else(|| {
                let known: Vec<bool> = candidates
                    .iter()
                    .filter_map(|c| c.truth)
                    .map(|t| t.context_availability == ContextAvailability::AnswerExistsInContext)
                    .collect();
                (!known.is_empty()).then(|| known.iter().any(|h| *h))
            });
        let trace = ExecutionTrace {
            fingerprint: ensemble.fingerprint.key(),
            c_sys: cost_of(&candidates, &self.accounting),
            l_sys_ms: latency_of(&candidates, &self.accounting),
            candidates,
            outcome,
            global_context_hit,
        };
        Ok((intent, QueryResult::Traced(trace)))
    }

    /// Runs a batch in parallel; records come back in input order.
    pub fn run_batch(&self, queries: &[(String, String)]) -> Vec<QueryRecord> {
        queries
            .par_iter()
            .map(|(query_id, query)| {
                let (intent, result) = match self.handle_query(query_id, query) {
                    Ok(r) => r,
                    Err(e) => (
                        self.classifier.classify(query),
                        QueryResult::Failed {
                            error: e.to_string(),
                        },
                    ),
                };
                QueryRecord {
                    query_id: query_id.clone(),
                    query: query.clone(),
                    intent,
                    result,
                }
            })
            .collect()
    }
}

/// Aggregate view of a batch: metrics over traced queries plus cost and latency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub metrics: MetricsReport,
    pub mean_cost: Option<f64>,
    pub p50_latency_ms: Option<f64>,
    pub traced: usize,
    pub unsupported: usize,
    pub failed: usize,
}

pub fn summarize(
    records: &[QueryRecord],
    irr: IrrDenominator,
) -> Result<BatchSummary, MetricsError> {
    let outcomes: Vec<QueryOutcome> = records.iter().filter_map(QueryRecord::outcome).collect();
    let metrics = compute_metrics(&outcomes, irr)?;
    let traces: Vec<&ExecutionTrace> = records.iter().filter_map(QueryRecord::trace).collect();
    let mean_cost = (!traces.is_empty())
        .then(|| traces.iter().map(|t| t.c_sys).sum::<f64>() / traces.len() as f64);
    let mut latencies: Vec<f64> = traces.iter().map(|t| t.l_sys_ms).collect();
    latencies.sort_by(f64::total_cmp);
    let p50_latency_ms = (!latencies.is_empty()).then(|| percentile_nearest_rank(&latencies, 0.5));
    let failed = records
        .iter()
        .filter(|r| matches!(r.result, QueryResult::Failed { .. }))
        .count();
    let unsupported = records
        .iter()
        .filter(|r| matches!(r.result, QueryResult::Unsupported))
        .count();
    Ok(BatchSummary {
        metrics,
        mean_cost,
        p50_latency_ms,
        traced: traces.len(),
        unsupported,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::reasoner::{reasoner_registry, ReasonerKind};
    use crate::agents::{AgentConfig, AgentProfile, LatencyModel};
    use crate::arbitration::{ArbitrationKind, ArbitrationStrategy, Rounding};
    use crate::dataset::synthetic::{generate, SyntheticSpec};
    use crate::planning::IntentRulePack;
    use crate::preprocess::{PreprocessStrategy, StrategyKind};
    use crate::scoring::JaccardScorer;
    use crate::sla::{compose_sla, QosKind, Slo};

    fn agent(id: &str, kind: StrategyKind, reasoner: ReasonerKind) -> AgentConfig {
        AgentConfig {
            agent_id: id.into(),
            strategy: PreprocessStrategy::new(kind),
            reasoner,
            data_source_policy: ["kb".to_string()].into(),
            sources: None,
            cost_per_call: 1.0,
            latency_model: LatencyModel::Uniform {
                lo: 50.0,
                hi: 150.0,
            },
            profile: Some(AgentProfile::new(0.9, 0.7, 0.2, 0.1).unwrap()),
        }
    }

    fn engine(reasoner: ReasonerKind) -> (Engine, Vec<(String, String)>) {
        let agents = vec![
            agent("c", StrategyKind::ThresholdControl, reasoner),
            agent("a", StrategyKind::AggressiveThreshold, reasoner),
            agent("b", StrategyKind::VerticalThreshold, reasoner),
        ];
        let corpus = generate(&SyntheticSpec {
            queries: 60,
            agents: agents
                .iter()
                .map(|a| (a.agent_id.clone(), a.profile.unwrap()))
                .collect(),
            p_global_context: 0.9,
            distractors_per_query: 1,
            seed: 1,
        });
        let store = DocumentStore::new("kb", corpus.documents, 64).unwrap();
        let queries = corpus
            .dataset
            .queries()
            .into_iter()
            .map(|(q, t)| (q.to_string(), t.to_string()))
            .collect();
        let strategy =
            ArbitrationStrategy::new(ArbitrationKind::RandomWithThreshold, 0.5, Rounding::Floor)
                .unwrap();
        let e = Engine::new(
            Arc::new(IntentRulePack::default()),
            compose_sla(vec![Slo::at_most(QosKind::HallucinationRate, 1.0)]).unwrap(),
            Environment::new(["kb"]),
            EnsembleSource::Fixed(EnsembleConfig::new(agents, strategy)),
            [("kb".to_string(), store)].into(),
            reasoner_registry(None),
            Arc::new(JaccardScorer),
            42,
        )
        .with_dataset(Arc::new(corpus.dataset));
        (e, queries)
    }

    #[test]
    fn batch_is_ordered_and_sorted_by_agent() {
        let (e, queries) = engine(ReasonerKind::OracleReplay);
        let records = e.run_batch(&queries);
        assert_eq!(records.len(), queries.len());
        for (r, (q, _)) in records.iter().zip(&queries) {
            assert_eq!(&r.query_id, q);
            let t = r.trace().expect("traced");
            let ids: Vec<&str> = t.candidates.iter().map(|c| c.agent_id.as_str()).collect();
            assert_eq!(ids, ["a", "b", "c"]);
            assert_eq!(t.c_sys, 3.0);
        }
    }

    #[test]
    fn replay_matches_dataset_annotations() {
        let (e, queries) = engine(ReasonerKind::OracleReplay);
        let ds = e.dataset.clone().unwrap();
        for r in e.run_batch(&queries) {
            let t = r.trace().unwrap();
            for c in &t.candidates {
                let rec = ds.record(&r.query_id, &c.agent_id).unwrap();
                assert_eq!(c.affirmative, rec.answer_quality.is_some());
                assert_eq!(c.truth, Some(rec.annotation()));
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (e, queries) = engine(ReasonerKind::CalibratedStochastic);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| e.run_batch(&queries))
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn unsupported_intents_are_not_traced() {
        let (e, _) = engine(ReasonerKind::OracleReplay);
        let recs = e.run_batch(&[("x".into(), "Burger joints near me".into())]);
        assert_eq!(recs[0].result, QueryResult::Unsupported);
        assert_eq!(recs[0].intent, IntentLabel::RequestForList);
    }

    #[test]
    fn missing_record_fails_query() {
        let (e, _) = engine(ReasonerKind::OracleReplay);
        let recs = e.run_batch(&[("nope".into(), "How do I fly?".into())]);
        assert!(matches!(recs[0].result, QueryResult::Failed { .. }));
        let s = summarize(&recs, IrrDenominator::AnswersProvided).unwrap();
        assert_eq!((s.traced, s.failed), (0, 1));
    }

    #[test]
    fn summary_counts_traced_queries() {
        let (e, queries) = engine(ReasonerKind::OracleReplay);
        let recs = e.run_batch(&queries);
        let s = summarize(&recs, IrrDenominator::AnswersProvided).unwrap();
        assert_eq!(s.traced, 60);
        assert_eq!(s.mean_cost, Some(3.0));
        let p = s.metrics.precision;
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn trace_round_trips_through_json() {
        let (e, queries) = engine(ReasonerKind::OracleReplay);
        for r in e.run_batch(&queries[..5]) {
            let line = serde_json::to_string(&r).unwrap();
            assert_eq!(serde_json::from_str::<QueryRecord>(&line).unwrap(), r);
        }
    }
}
