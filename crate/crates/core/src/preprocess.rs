//! Post-retrieval context pruning.
//!
//! Every strategy flattens the retrieved documents into one ordered stream
//! and keeps tokens from the front of that stream until the budget is
//! spent; the document straddling the boundary is cut mid-document.
//! Strategies differ only in which documents enter the stream and in what
//! order.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::http::TransportError;
use crate::registry::{Registry, UnknownStrategy};
use crate::retrieval::{ScoredDoc, VerticalResults};
use crate::scoring::RelevanceScorer;

pub const DEFAULT_BUDGET: usize = 8000;
pub const AGGRESSIVE_BUDGET: usize = 6000;
pub const DEFAULT_VERTICAL_LIMIT: usize = 2;

/// Splits text into tokens for budget accounting.
pub trait Tokenizer: Send + Sync {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Whitespace-delimited tokens; runs of whitespace count as one delimiter.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub fn count_tokens(text: &str) -> usize {
    WhitespaceTokenizer.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ThresholdControl,
    VerticalThreshold,
    AggressiveThreshold,
    RerankThenThreshold,
    RerankThenVerticalThreshold,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::ThresholdControl,
        StrategyKind::VerticalThreshold,
        StrategyKind::AggressiveThreshold,
        StrategyKind::RerankThenThreshold,
        StrategyKind::RerankThenVerticalThreshold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ThresholdControl => "threshold_control",
            StrategyKind::VerticalThreshold => "vertical_threshold",
            StrategyKind::AggressiveThreshold => "aggressive_threshold",
            StrategyKind::RerankThenThreshold => "rerank_then_threshold",
            StrategyKind::RerankThenVerticalThreshold => "rerank_then_vertical_threshold",
        }
    }

    pub fn default_budget(self) -> usize {
        match self {
            StrategyKind::AggressiveThreshold => AGGRESSIVE_BUDGET,
            _ => DEFAULT_BUDGET,
        }
    }

    pub fn uses_verticals(self) -> bool {
        matches!(
            self,
            StrategyKind::VerticalThreshold | StrategyKind::RerankThenVerticalThreshold
        )
    }

    pub fn needs_scorer(self) -> bool {
        matches!(
            self,
            StrategyKind::RerankThenThreshold | StrategyKind::RerankThenVerticalThreshold
        )
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown preprocessing strategy `{s}`"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: StrategyKind,
    token_budget: Option<usize>,
    vertical_limit: Option<usize>,
}

/// A strategy kind plus its budget and (for vertical variants) vertical limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStrategy")]
pub struct PreprocessStrategy {
    pub kind: StrategyKind,
    pub token_budget: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertical_limit: Option<usize>,
}

impl TryFrom<RawStrategy> for PreprocessStrategy {
    type Error = String;

    fn try_from(raw: RawStrategy) -> Result<Self, Self::Error> {
        let mut s = PreprocessStrategy::new(raw.kind);
        if let Some(b) = raw.token_budget {
            if b == 0 {
                return Err("token_budget must be positive".into());
            }
            s.token_budget = b;
        }
        if let Some(limit) = raw.vertical_limit {
            if !raw.kind.uses_verticals() {
                return Err(format!("vertical_limit does not apply to `{}`", raw.kind));
            }
            if limit == 0 {
                return Err("vertical_limit must be positive".into());
            }
            s.vertical_limit = Some(limit);
        }
        Ok(s)
    }
}

impl PreprocessStrategy {
    /// The kind with its default budget and vertical limit.
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            token_budget: kind.default_budget(),
            vertical_limit: kind.uses_verticals().then_some(DEFAULT_VERTICAL_LIMIT),
        }
    }

    pub fn with_budget(mut self, token_budget: usize) -> Self {
        self.token_budget = token_budget;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextEntry {
    pub uid: u64,
    pub vertical: String,
    /// The kept tokens of the body, joined by single spaces.
    pub text: String,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ContextWindow {
    pub entries: Vec<ContextEntry>,
    pub total_tokens: usize,
}

impl ContextWindow {
    pub fn uids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.uid)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("strategy `{0}` re-ranks documents and needs a relevance scorer")]
    MissingScorer(StrategyKind),
    #[error("re-ranking failed: {0}")]
    Scorer(#[from] TransportError),
    #[error(transparent)]
    Unknown(#[from] UnknownStrategy),
}

/// Keeps tokens from the front of `docs` until `budget` is reached.
pub fn take_budget<'a>(
    docs: impl IntoIterator<Item = &'a ScoredDoc>,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> ContextWindow {
    let mut window = ContextWindow::default();
    for sd in docs {
        let remaining = budget - window.total_tokens;
        if remaining == 0 {
            break;
        }
        let tokens = tokenizer.tokenize(&sd.doc.body);
        let kept = tokens.len().min(remaining);
        if kept == 0 {
            continue;
        }
        window.entries.push(ContextEntry {
            uid: sd.doc.uid,
            vertical: sd.doc.vertical.clone(),
            text: tokens[..kept].join(" "),
            tokens: kept,
        });
        window.total_tokens += kept;
    }
    window
}

/// One context-pruning algorithm.
pub trait Preprocessor: Send + Sync {
    fn name(&self) -> &'static str;

    fn apply(
        &self,
        query: &str,
        results: &VerticalResults,
        strategy: &PreprocessStrategy,
        scorer: Option<&dyn RelevanceScorer>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<ContextWindow, PreprocessError>;
}

/// Plain truncation of the flattened result list.
#[derive(Debug, Clone, Copy)]
pub struct Thresholding;

impl Preprocessor for Thresholding {
    fn name(&self) -> &'static str {
        "thresholding"
    }

    fn apply(
        &self,
        _query: &str,
        results: &VerticalResults,
        strategy: &PreprocessStrategy,
        _scorer: Option<&dyn RelevanceScorer>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<ContextWindow, PreprocessError> {
        Ok(take_budget(
            results.flatten(),
            strategy.token_budget,
            tokenizer,
        ))
    }
}

fn top_verticals<'a>(
    results: &'a VerticalResults,
    strategy: &PreprocessStrategy,
) -> impl Iterator<Item = &'a ScoredDoc> {
    let limit = strategy.vertical_limit.unwrap_or(DEFAULT_VERTICAL_LIMIT);
    results
        .verticals
        .iter()
        .take(limit)
        .flat_map(|v| v.docs.iter())
}

/// Truncation restricted to the highest-ranked verticals.
#[derive(Debug, Clone, Copy)]
pub struct VerticalThresholding;

impl Preprocessor for VerticalThresholding {
    fn name(&self) -> &'static str {
        "vertical_thresholding"
    }

    fn apply(
        &self,
        _query: &str,
        results: &VerticalResults,
        strategy: &PreprocessStrategy,
        _scorer: Option<&dyn RelevanceScorer>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<ContextWindow, PreprocessError> {
        Ok(take_budget(
            top_verticals(results, strategy),
            strategy.token_budget,
            tokenizer,
        ))
    }
}

/// Re-orders candidates globally by scorer relevance, then truncates.
/// With `within_top_verticals`, only the top verticals are candidates.
#[derive(Debug, Clone, Copy)]
pub struct RerankThresholding {
    pub within_top_verticals: bool,
}

impl Preprocessor for RerankThresholding {
    fn name(&self) -> &'static str {
        if self.within_top_verticals {
            "rerank_vertical_thresholding"
        } else {
            "rerank_thresholding"
        }
    }

    fn apply(
        &self,
        query: &str,
        results: &VerticalResults,
        strategy: &PreprocessStrategy,
        scorer: Option<&dyn RelevanceScorer>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<ContextWindow, PreprocessError> {
        let scorer = scorer.ok_or(PreprocessError::MissingScorer(strategy.kind))?;
        let candidates: Vec<&ScoredDoc> = if self.within_top_verticals {
            top_verticals(results, strategy).collect()
        } else {
            results.flatten().collect()
        };
        let mut scored = candidates
            .into_iter()
            .map(|sd| Ok((scorer.score(query, &sd.doc.body)?, sd)))
            .collect::<Result<Vec<_>, TransportError>>()?;
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then(a.doc.uid.cmp(&b.doc.uid)));
        Ok(take_budget(
            scored.into_iter().map(|(_, sd)| sd),
            strategy.token_budget,
            tokenizer,
        ))
    }
}

/// Registry holding the built-in preprocessors, keyed by strategy kind name.
pub fn default_registry() -> &'static Registry<dyn Preprocessor> {
    static REGISTRY: OnceLock<Registry<dyn Preprocessor>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn Preprocessor> = Registry::new("preprocessing strategy");
        reg.register(
            StrategyKind::ThresholdControl.as_str(),
            Arc::new(Thresholding),
        )
        .register(
            StrategyKind::AggressiveThreshold.as_str(),
            Arc::new(Thresholding),
        )
        .register(
            StrategyKind::VerticalThreshold.as_str(),
            Arc::new(VerticalThresholding),
        )
        .register(
            StrategyKind::RerankThenThreshold.as_str(),
            Arc::new(RerankThresholding {
                within_top_verticals: false,
            }),
        )
        .register(
            StrategyKind::RerankThenVerticalThreshold.as_str(),
            Arc::new(RerankThresholding {
                within_top_verticals: true,
            }),
        );
        reg
    })
}

/// Applies `strategy` with the whitespace tokenizer.
pub fn apply_strategy(
    query: &str,
    results: &VerticalResults,
    strategy: &PreprocessStrategy,
    scorer: Option<&dyn RelevanceScorer>,
) -> Result<ContextWindow, PreprocessError> {
    if strategy.kind.needs_scorer() && scorer.is_none() {
        return Err(PreprocessError::MissingScorer(strategy.kind));
    }
    let preprocessor = default_registry().get(strategy.kind.as_str())?;
    preprocessor.apply(query, results, strategy, scorer, &WhitespaceTokenizer)
}
