//! Query/candidate relevance scorers used for re-ranking and arbitration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::http::{EndpointConfig, JsonClient, TransportError};
use crate::text::word_tokens;

/// Scores how relevant `candidate` text is to `query`, in `[0, 1]`.
pub trait RelevanceScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, query: &str, candidate: &str) -> Result<f64, TransportError>;
}

/// Jaccard similarity of the lowercased word sets of `query` and `answer`.
///
/// Two texts without any word tokens score 0.
pub fn surrogate_relevance(query: &str, answer: &str) -> f64 {
    let q: BTreeSet<String> = word_tokens(query).collect();
    let a: BTreeSet<String> = word_tokens(answer).collect();
    let union = q.union(&a).count();
    if union == 0 {
        return 0.0;
    }
    q.intersection(&a).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, Default)]
pub struct JaccardScorer;

impl RelevanceScorer for JaccardScorer {
    fn name(&self) -> &str {
        "jaccard"
    }

    fn score(&self, query: &str, candidate: &str) -> Result<f64, TransportError> {
        Ok(surrogate_relevance(query, candidate))
    }
}

/// Gives every candidate the same score.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl RelevanceScorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, _query: &str, _candidate: &str) -> Result<f64, TransportError> {
        Ok(self.0)
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    candidate: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

/// Remote scorer: `POST /score {"query", "candidate"}` → `{"score"}`, clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: JsonClient,
}

impl HttpScorer {
    pub fn new(config: EndpointConfig) -> Self {
        Self {
            client: JsonClient::new(config),
        }
    }
}

impl RelevanceScorer for HttpScorer {
    fn name(&self) -> &str {
        "http"
    }

    fn score(&self, query: &str, candidate: &str) -> Result<f64, TransportError> {
        let resp: ScoreResponse = self
            .client
            .post("/score", &ScoreRequest { query, candidate })?;
        if resp.score.is_nan() {
            return Err(TransportError::Body {
                url: self.client.config().base_url.clone(),
                message: "score is NaN".into(),
            });
        }
        Ok(resp.score.clamp(0.0, 1.0))
    }
}

/// Scorer selection as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    #[default]
    Jaccard,
    Constant {
        value: f64,
    },
    Http(EndpointConfig),
}

impl ScorerConfig {
    pub fn build(&self) -> std::sync::Arc<dyn RelevanceScorer> {
        match self {
            ScorerConfig::Jaccard => std::sync::Arc::new(JaccardScorer),
            ScorerConfig::Constant { value } => {
                std::sync::Arc::new(ConstantScorer(value.clamp(0.0, 1.0)))
            }
            ScorerConfig::Http(cfg) => std::sync::Arc::new(HttpScorer::new(cfg.clone())),
        }
    }
}
