//! Candidate collection and arbitration.
//!
//! 1. Keep the affirmative candidates (those that attempted an answer).
//! 2. Gated strategies require at least `k = round(T·|C|)` of them, with
//!    `round` being floor (default) or ceiling; otherwise the ensemble
//!    returns a negative result.
//! 3. An [`Arbiter`] picks one affirmative candidate. Answers are selected,
//!    never merged.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::CandidateResponse;
use crate::engine::accounting::AccountingParams;
use crate::http::TransportError;
use crate::registry::{Registry, UnknownStrategy};
use crate::rng::Stream;
use crate::scoring::RelevanceScorer;

pub use crate::scoring::surrogate_relevance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArbitrationKind {
    /// Gate, then pick uniformly at random.
    #[serde(rename = "vote_with_thresh")]
    RandomWithThreshold,
    /// No gate; pick the most relevant answer.
    #[serde(rename = "vote_most_relevant")]
    MostRelevant,
    /// Gate, then pick the most relevant answer.
    #[serde(rename = "vote_most_relevant_with_thresh")]
    MostRelevantWithThreshold,
    /// No gate; pick uniformly at random.
    #[serde(rename = "random_no_thresh")]
    RandomNoThreshold,
}

impl ArbitrationKind {
    pub const ALL: [ArbitrationKind; 4] = [
        ArbitrationKind::RandomWithThreshold,
        ArbitrationKind::MostRelevant,
        ArbitrationKind::MostRelevantWithThreshold,
        ArbitrationKind::RandomNoThreshold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArbitrationKind::RandomWithThreshold => "vote_with_thresh",
            ArbitrationKind::MostRelevant => "vote_most_relevant",
            ArbitrationKind::MostRelevantWithThreshold => "vote_most_relevant_with_thresh",
            ArbitrationKind::RandomNoThreshold => "random_no_thresh",
        }
    }

    pub fn is_gated(self) -> bool {
        matches!(
            self,
            ArbitrationKind::RandomWithThreshold | ArbitrationKind::MostRelevantWithThreshold
        )
    }

    pub fn uses_scorer(self) -> bool {
        matches!(
            self,
            ArbitrationKind::MostRelevant | ArbitrationKind::MostRelevantWithThreshold
        )
    }
}

impl std::fmt::Display for ArbitrationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ArbitrationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArbitrationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown arbitration strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Floor,
    Ceil,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: ArbitrationKind,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    rounding: Rounding,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStrategy")]
pub struct ArbitrationStrategy {
    pub kind: ArbitrationKind,
    pub threshold: f64,
    pub rounding: Rounding,
}

impl TryFrom<RawStrategy> for ArbitrationStrategy {
    type Error = ArbitrationError;

    fn try_from(raw: RawStrategy) -> Result<Self, Self::Error> {
        Self::new(raw.kind, raw.threshold, raw.rounding)
    }
}

impl ArbitrationStrategy {
    pub fn new(
        kind: ArbitrationKind,
        threshold: f64,
        rounding: Rounding,
    ) -> Result<Self, ArbitrationError> {
        check_threshold(threshold)?;
        Ok(Self {
            kind,
            threshold,
            rounding,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArbitrationError {
    #[error("threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(f64),
    #[error("cannot arbitrate an empty candidate set")]
    EmptyCandidateSet,
    #[error("relevance scoring failed: {0}")]
    Scorer(#[from] TransportError),
    #[error(transparent)]
    Unknown(#[from] UnknownStrategy),
}

impl std::fmt::Display for ArbitrationStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} T={} ({:?})",
            self.kind, self.threshold, self.rounding
        )
    }
}

fn check_threshold(t: f64) -> Result<(), ArbitrationError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(ArbitrationError::InvalidThreshold(t))
    }
}

/// `T·n` rounded down or up. Products within 1e-9 of an integer are
/// snapped first so that, e.g., 0.3·10 gives 3 under both roundings.
pub fn required_affirmatives(candidate_count: usize, threshold: f64, rounding: Rounding) -> usize {
    let x = threshold * candidate_count as f64;
    let nearest = x.round();
    let x = if (x - nearest).abs() <= 1e-9 {
        nearest
    } else {
        x
    };
    match rounding {
        Rounding::Floor => x.floor() as usize,
        Rounding::Ceil => x.ceil() as usize,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GateResult {
    pub pass: bool,
    pub k: usize,
}

/// Passes when at least `k` candidates are affirmative.
pub fn threshold_gate(
    candidate_count: usize,
    affirmative_count: usize,
    threshold: f64,
    rounding: Rounding,
) -> Result<GateResult, ArbitrationError> {
    check_threshold(threshold)?;
    debug_assert!(affirmative_count <= candidate_count);
    let k = required_affirmatives(candidate_count, threshold, rounding);
    Ok(GateResult {
        pass: affirmative_count >= k,
        k,
    })
}

/// The candidates that attempted an answer, in input order.
pub fn affirmative_subset(candidates: &[CandidateResponse]) -> Vec<&CandidateResponse> {
    candidates.iter().filter(|c| c.affirmative).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    /// Relevance per affirmative candidate, when the arbiter scored them.
    pub scores: Option<Vec<f64>>,
}

/// Picks one candidate out of a non-empty affirmative set.
pub trait Arbiter: Send + Sync {
    fn name(&self) -> &'static str;

    fn select(
        &self,
        query: &str,
        affirmative: &[&CandidateResponse],
        scorer: &dyn RelevanceScorer,
        rng: &mut Stream,
    ) -> Result<Selection, ArbitrationError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RandomPick;

impl Arbiter for RandomPick {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(
        &self,
        _query: &str,
        affirmative: &[&CandidateResponse],
        _scorer: &dyn RelevanceScorer,
        rng: &mut Stream,
    ) -> Result<Selection, ArbitrationError> {
        Ok(Selection {
            index: rng.gen_range(0..affirmative.len()),
            scores: None,
        })
    }
}

/// Highest scorer relevance wins; ties go to the smallest agent id.
#[derive(Debug, Clone, Copy)]
pub struct MostRelevantPick;

impl Arbiter for MostRelevantPick {
    fn name(&self) -> &'static str {
        "most_relevant"
    }

    fn select(
        &self,
        query: &str,
        affirmative: &[&CandidateResponse],
        scorer: &dyn RelevanceScorer,
        _rng: &mut Stream,
    ) -> Result<Selection, ArbitrationError> {
        let scores = affirmative
            .iter()
            .map(|c| scorer.score(query, c.answer_text.as_deref().unwrap_or_default()))
            .collect::<Result<Vec<f64>, _>>()?;
        let index = (0..affirmative.len())
            .max_by(|&a, &b| {
                scores[a]
                    .total_cmp(&scores[b])
                    .then_with(|| affirmative[b].agent_id.cmp(&affirmative[a].agent_id))
            })
            .expect("non-empty affirmative set");
        Ok(Selection {
            index,
            scores: Some(scores),
        })
    }
}

/// Arbiters for every [`ArbitrationKind`], keyed by kind name.
pub fn default_registry() -> &'static Registry<dyn Arbiter> {
    static REGISTRY: OnceLock<Registry<dyn Arbiter>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut reg: Registry<dyn Arbiter> = Registry::new("arbitration strategy");
        for kind in ArbitrationKind::ALL {
            let arbiter: Arc<dyn Arbiter> = if kind.uses_scorer() {
                Arc::new(MostRelevantPick)
            } else {
                Arc::new(RandomPick)
            };
            reg.register(kind.as_str(), arbiter);
        }
        reg
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Answered,
    NegativeResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationOutcome {
    pub decision: Decision,
    pub selected: Option<CandidateResponse>,
    pub k: usize,
    pub candidate_count: usize,
    pub affirmative_count: usize,
    pub arbitration_cost: f64,
    pub arbitration_latency_ms: f64,
}

/// Gates and arbitrates one query's candidate set.
pub fn arbitrate(
    query: &str,
    candidates: &[CandidateResponse],
    strategy: &ArbitrationStrategy,
    scorer: &dyn RelevanceScorer,
    rng: &mut Stream,
    accounting: &AccountingParams,
) -> Result<ArbitrationOutcome, ArbitrationError> {
    if candidates.is_empty() {
        return Err(ArbitrationError::EmptyCandidateSet);
    }
    let affirmative = affirmative_subset(candidates);
    let gate = threshold_gate(
        candidates.len(),
        affirmative.len(),
        strategy.threshold,
        strategy.rounding,
    )?;
    let mut outcome = ArbitrationOutcome {
        decision: Decision::NegativeResult,
        selected: None,
        k: gate.k,
        candidate_count: candidates.len(),
        affirmative_count: affirmative.len(),
        arbitration_cost: accounting.arbitration_cost.eval(candidates.len()),
        arbitration_latency_ms: accounting.arbitration_latency.eval(candidates.len()),
    };
    if affirmative.is_empty() || (strategy.kind.is_gated() && !gate.pass) {
        return Ok(outcome);
    }
    let arbiter = default_registry().get(strategy.kind.as_str())?;
    let selection = arbiter.select(query, &affirmative, scorer, rng)?;
    let mut chosen = affirmative[selection.index].clone();
    if let Some(scores) = selection.scores {
        chosen.relevance = Some(scores[selection.index]);
    }
    outcome.decision = Decision::Answered;
    outcome.selected = Some(chosen);
    Ok(outcome)
}
