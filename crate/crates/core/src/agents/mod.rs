//! The RAG agent pipeline: retrieve, prune, reason, parse.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedDataset, AnswerAnnotation};
use crate::http::TransportError;
use crate::preprocess::{apply_strategy, PreprocessError, PreprocessStrategy};
use crate::registry::{Registry, UnknownStrategy};
use crate::retrieval::{search, DocumentStore, RetrievalError, VerticalResults};
use crate::rng::Stream;
use crate::scoring::RelevanceScorer;

pub mod prompt;
pub mod reasoner;

pub use prompt::{build_prompt, parse_reasoner_output, ParseError, ParsedReply};
pub use reasoner::{sample_outcome, ReasonRequest, Reasoner, ReasonerKind, Reasoning};

const PROB_TOLERANCE: f64 = 1e-9;

/// Calibrated behaviour of one agent: how often it answers, and how the
/// answers it gives split between correct, hallucinated and incongruent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProfile {
    pub p_affirmative: f64,
    #[serde(alias = "p_correct_given_affirmative")]
    pub p_correct: f64,
    #[serde(alias = "p_hallucination_given_affirmative")]
    pub p_hallucination: f64,
    #[serde(alias = "p_incongruent_given_affirmative")]
    pub p_incongruent: f64,
}

impl AgentProfile {
    pub fn new(
        p_affirmative: f64,
        p_correct: f64,
        p_hallucination: f64,
        p_incongruent: f64,
    ) -> Result<Self, String> {
        let p = Self {
            p_affirmative,
            p_correct,
            p_hallucination,
            p_incongruent,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("p_affirmative", self.p_affirmative),
            ("p_correct", self.p_correct),
            ("p_hallucination", self.p_hallucination),
            ("p_incongruent", self.p_incongruent),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is not a probability"));
            }
        }
        let total = self.p_correct + self.p_hallucination + self.p_incongruent;
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(format!(
                "answer-quality probabilities sum to {total}, not 1"
            ));
        }
        Ok(())
    }
}

/// Simulated per-call latency in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Constant { ms: f64 },
    Uniform { lo: f64, hi: f64 },
    Empirical { samples: Vec<f64> },
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            LatencyModel::Constant { ms } if ok(*ms) => Ok(()),
            LatencyModel::Uniform { lo, hi } if ok(*lo) && ok(*hi) && lo <= hi => Ok(()),
            LatencyModel::Empirical { samples }
                if !samples.is_empty() && samples.iter().all(|v| ok(*v)) =>
            {
                Ok(())
            }
            other => Err(format!("invalid latency model {other:?}")),
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match self {
            LatencyModel::Constant { ms } => *ms,
            LatencyModel::Uniform { lo, hi } if lo == hi => *lo,
            LatencyModel::Uniform { lo, hi } => rng.gen_range(*lo..*hi),
            LatencyModel::Empirical { samples } => samples[rng.gen_range(0..samples.len())],
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match self {
            LatencyModel::Constant { ms } => *ms,
            LatencyModel::Uniform { hi, .. } => *hi,
            LatencyModel::Empirical { samples } => samples.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub agent_id: String,
    pub strategy: PreprocessStrategy,
    pub reasoner: ReasonerKind,
    /// Store labels this agent may read from.
    pub data_source_policy: BTreeSet<String>,
    /// Stores the agent queries; defaults to every permitted store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<String>>,
    pub cost_per_call: f64,
    pub latency_model: LatencyModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<AgentProfile>,
}

impl AgentConfig {
    /// Field-level validation; errors name the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let err = |f: &str, m: String| Err((f.to_string(), m));
        if self.agent_id.is_empty() {
            return err("agent_id", "must not be empty".into());
        }
        if !(self.cost_per_call.is_finite() && self.cost_per_call >= 0.0) {
            return err(
                "cost_per_call",
                format!("must be >= 0, got {}", self.cost_per_call),
            );
        }
        if let Err(m) = self.latency_model.validate() {
            return err("latency_model", m);
        }
        if let Some(p) = &self.profile {
            if let Err(m) = p.validate() {
                return err("profile", m);
            }
        }
        if self.reasoner == ReasonerKind::CalibratedStochastic && self.profile.is_none() {
            return err(
                "profile",
                "required by the calibrated_stochastic reasoner".into(),
            );
        }
        Ok(())
    }

    pub fn source_labels(&self) -> Vec<&str> {
        match &self.sources {
            Some(s) => s.iter().map(String::as_str).collect(),
            None => self.data_source_policy.iter().map(String::as_str).collect(),
        }
    }
}

/// One agent's answer to one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub agent_id: String,
    pub affirmative: bool,
    pub answer_text: Option<String>,
    pub uid_list: Option<Vec<u64>>,
    pub relevance: Option<f64>,
    pub cost: f64,
    pub latency_ms: f64,
    pub truth: Option<AnswerAnnotation>,
    /// Why a reply was downgraded to a refusal (parse or transport failure).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CandidateResponse {
    pub fn negative(agent_id: impl Into<String>) -> Self {
        Self {
            agent_id: agent_id.into(),
            affirmative: false,
            answer_text: None,
            uid_list: None,
            relevance: None,
            cost: 0.0,
            latency_ms: 0.0,
            truth: None,
            note: None,
        }
    }

    pub fn affirmative(
        agent_id: impl Into<String>,
        answer: impl Into<String>,
        uids: Vec<u64>,
    ) -> Self {
        Self {
            affirmative: true,
            answer_text: Some(answer.into()),
            uid_list: Some(uids),
            ..Self::negative(agent_id)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("agent `{agent}` may not read store `{store}`")]
    PolicyViolation { agent: String, store: String },
    #[error("agent `{agent}` references unknown store `{store}`")]
    UnknownStore { agent: String, store: String },
    #[error("no dataset record for query `{query_id}` and agent `{agent_id}`")]
    MissingRecord { query_id: String, agent_id: String },
    #[error("agent `{0}` has no calibration profile")]
    MissingProfile(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Reasoner(#[from] UnknownStrategy),
}

/// Shared, read-only inputs of every agent run.
pub struct AgentEnv<'a> {
    pub stores: &'a BTreeMap<String, DocumentStore>,
    pub dataset: Option<&'a AnnotatedDataset>,
    pub scorer: Option<&'a dyn RelevanceScorer>,
    pub reasoners: &'a Registry<dyn Reasoner>,
    pub top_k_per_vertical: usize,
    pub prompt_template: &'a str,
    pub refusal_marker: &'a str,
}

/// Runs one agent on one query.
///
/// Unparseable replies become refusals carrying a `note`. Citations of
/// documents outside the agent's own context window are dropped.
pub fn run_agent(
    query_id: &str,
    query: &str,
    config: &AgentConfig,
    env: &AgentEnv<'_>,
    rng: &mut Stream,
) -> Result<CandidateResponse, AgentError> {
    let mut parts = Vec::new();
    for label in config.source_labels() {
        if !config.data_source_policy.contains(label) {
            return Err(AgentError::PolicyViolation {
                agent: config.agent_id.clone(),
                store: label.to_string(),
            });
        }
        let store = env
            .stores
            .get(label)
            .ok_or_else(|| AgentError::UnknownStore {
                agent: config.agent_id.clone(),
                store: label.to_string(),
            })?;
        parts.push(search(query, store, env.top_k_per_vertical)?);
    }
    let results = VerticalResults::merge(parts, env.top_k_per_vertical);
    let context = apply_strategy(query, &results, &config.strategy, env.scorer)?;
    let prompt = prompt::build_prompt_with(env.prompt_template, query, &context);

    let reasoner = env.reasoners.get(config.reasoner.as_str())?;
    let request = ReasonRequest {
        query_id,
        query,
        agent: config,
        prompt: &prompt,
        context: &context,
        dataset: env.dataset,
    };
    let reasoning = reasoner.reason(&request, rng)?;
    let latency_ms = config.latency_model.sample(rng);

    let mut response = match prompt::parse_reasoner_output_with(&reasoning.raw, env.refusal_marker)
    {
        Ok(ParsedReply::Answer { answer, uid_list }) => {
            let seen: BTreeSet<u64> = context.uids().collect();
            let uids = uid_list.into_iter().filter(|u| seen.contains(u)).collect();
            CandidateResponse::affirmative(&config.agent_id, answer, uids)
        }
        Ok(ParsedReply::Negative) => CandidateResponse::negative(&config.agent_id),
        Err(e) => CandidateResponse {
            note: Some(e.to_string()),
            ..CandidateResponse::negative(&config.agent_id)
        },
    };
    response.cost = config.cost_per_call;
    response.latency_ms = latency_ms;
    response.truth = reasoning.truth;
    Ok(response)
}
