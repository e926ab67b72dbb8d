//! Reasoning backends. Each produces the raw text a model would have
//! returned, plus the ground-truth annotation when the backend knows it.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentConfig, AgentError, AgentProfile};
use crate::dataset::{AnnotatedDataset, AnswerAnnotation, AnswerQuality, ContextAvailability};
use crate::http::{EndpointConfig, JsonClient};
use crate::preprocess::ContextWindow;
use crate::registry::Registry;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerKind {
    OracleReplay,
    CalibratedStochastic,
    ExternalHttp,
}

impl ReasonerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonerKind::OracleReplay => "oracle_replay",
            ReasonerKind::CalibratedStochastic => "calibrated_stochastic",
            ReasonerKind::ExternalHttp => "external_http",
        }
    }
}

pub struct ReasonRequest<'a> {
    pub query_id: &'a str,
    pub query: &'a str,
    pub agent: &'a AgentConfig,
    pub prompt: &'a str,
    pub context: &'a ContextWindow,
    pub dataset: Option<&'a AnnotatedDataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reasoning {
    pub raw: String,
    pub truth: Option<AnswerAnnotation>,
}

pub trait Reasoner: Send + Sync {
    fn name(&self) -> &str;
    fn reason(
        &self,
        request: &ReasonRequest<'_>,
        rng: &mut Stream,
    ) -> Result<Reasoning, AgentError>;
}

fn reply_json(answer: Option<&str>, uids: &[u64]) -> String {
    serde_json::json!({ "answer": answer, "uid_list": uids }).to_string()
}

/// Replays the annotated outcome recorded for `(query_id, agent_id)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleReplay;

impl Reasoner for OracleReplay {
    fn name(&self) -> &str {
        ReasonerKind::OracleReplay.as_str()
    }

    fn reason(
        &self,
        request: &ReasonRequest<'_>,
        _rng: &mut Stream,
    ) -> Result<Reasoning, AgentError> {
        let missing = || AgentError::MissingRecord {
            query_id: request.query_id.to_string(),
            agent_id: request.agent.agent_id.clone(),
        };
        let record = request
            .dataset
            .ok_or_else(missing)?
            .record(request.query_id, &request.agent.agent_id);
        let record = record.ok_or_else(missing)?;
        Ok(Reasoning {
            raw: reply_json(record.answer_text.as_deref(), &record.context_docs),
            truth: Some(record.annotation()),
        })
    }
}

/// Samples the outcome of one query from an agent's calibrated profile.
///
/// Returns `None` for a refusal.
pub fn sample_outcome(profile: &AgentProfile, rng: &mut Stream) -> Option<AnswerQuality> {
    let u: f64 = rng.gen();
    if u >= profile.p_affirmative {
        return None;
    }
    let v: f64 = rng.gen();
    Some(if v < profile.p_correct {
        AnswerQuality::Correct
    } else if v < profile.p_correct + profile.p_hallucination {
        AnswerQuality::Hallucination
    } else {
        AnswerQuality::Incongruent
    })
}

fn synthetic_answer(
    quality: AnswerQuality,
    query: &str,
    context: &ContextWindow,
) -> (String, Vec<u64>) {
    let grounded = context
        .entries
        .first()
        .map(|e| e.text.split(' ').take(24).collect::<Vec<_>>().join(" "))
        .unwrap_or_else(|| format!("The answer to \"{query}\" is covered in the documentation."));
    let cited: Vec<u64> = context.uids().take(2).collect();
    match quality {
        AnswerQuality::Correct => (grounded, cited),
        AnswerQuality::Incongruent => (
            format!("According to the provided context, {grounded}"),
            cited,
        ),
        AnswerQuality::Hallucination => (
            format!("Regarding \"{query}\": this is handled automatically and needs no action."),
            Vec::new(),
        ),
    }
}

/// Draws outcomes from the agent's [`AgentProfile`] and writes a synthetic reply.
#[derive(Debug, Clone, Copy, Default)]
pub struct CalibratedStochastic;

impl Reasoner for CalibratedStochastic {
    fn name(&self) -> &str {
        ReasonerKind::CalibratedStochastic.as_str()
    }

    fn reason(
        &self,
        request: &ReasonRequest<'_>,
        rng: &mut Stream,
    ) -> Result<Reasoning, AgentError> {
        let profile = request
            .agent
            .profile
            .as_ref()
            .ok_or_else(|| AgentError::MissingProfile(request.agent.agent_id.clone()))?;
        let availability = ContextAvailability::AnswerExistsInContext;
        Ok(match sample_outcome(profile, rng) {
            None => Reasoning {
                raw: reply_json(None, &[]),
                truth: Some(AnswerAnnotation::negative(availability)),
            },
            Some(quality) => {
                let (text, uids) = synthetic_answer(quality, request.query, request.context);
                Reasoning {
                    raw: reply_json(Some(&text), &uids),
                    truth: Some(AnswerAnnotation::provided(availability, quality)),
                }
            }
        })
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Remote model: `POST /generate {"prompt"}` → `{"text"}`.
#[derive(Debug, Clone)]
pub struct ExternalHttp {
    client: JsonClient,
}

impl ExternalHttp {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            client: JsonClient::new(config),
        }
    }
}

impl Reasoner for ExternalHttp {
    fn name(&self) -> &str {
        ReasonerKind::ExternalHttp.as_str()
    }

    fn reason(
        &self,
        request: &ReasonRequest<'_>,
        _rng: &mut Stream,
    ) -> Result<Reasoning, AgentError> {
        let resp: GenerateResponse = self.client.post(
            "/generate",
            &GenerateRequest {
                prompt: request.prompt,
            },
        )?;
        Ok(Reasoning {
            raw: resp.text,
            truth: None,
        })
    }
}

/// Oracle and stochastic backends, plus the HTTP backend when an endpoint is given.
pub fn reasoner_registry(http: Option<EndpointConfig>) -> Registry<dyn Reasoner> {
    let mut reg: Registry<dyn Reasoner> = Registry::new("reasoner");
    reg.register(ReasonerKind::OracleReplay.as_str(), Arc::new(OracleReplay))
        .register(
            ReasonerKind::CalibratedStochastic.as_str(),
            Arc::new(CalibratedStochastic),
        );
    if let Some(cfg) = http {
        reg.register(
            ReasonerKind::ExternalHttp.as_str(),
            Arc::new(ExternalHttp::new(cfg)),
        );
    }
    reg
}
