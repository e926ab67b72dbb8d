//! Answer-quality metrics over per-query outcomes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::AnswerQuality;

/// Final outcome of one query, as needed for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    /// The answer exists in the union of all agents' contexts.
    pub global_context_hit: bool,
    pub answered: bool,
    /// Annotation of the returned answer; `None` for refusals or unlabelled answers.
    pub quality: Option<AnswerQuality>,
}

/// Which count divides the incongruent answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrrDenominator {
    /// Same denominator as precision and hallucination rate.
    #[default]
    AnswersProvided,
    /// Every scored query, answered or not.
    TotalQueries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricCounts {
    pub answers_provided: u64,
    pub correct: u64,
    /// Correct answers on queries whose answer exists in the global context.
    pub correct_with_context: u64,
    pub hallucinations: u64,
    pub incongruent: u64,
    pub global_context_hits: u64,
    pub total_queries: u64,
}

impl MetricCounts {
    pub fn add(&mut self, other: &MetricCounts) {
        self.answers_provided += other.answers_provided;
        self.correct += other.correct;
        self.correct_with_context += other.correct_with_context;
        self.hallucinations += other.hallucinations;
        self.incongruent += other.incongruent;
        self.global_context_hits += other.global_context_hits;
        self.total_queries += other.total_queries;
    }

    pub fn record(
        &mut self,
        global_context_hit: bool,
        answered: bool,
        quality: Option<AnswerQuality>,
    ) {
        self.total_queries += 1;
        self.global_context_hits += u64::from(global_context_hit);
        if !answered {
            return;
        }
        self.answers_provided += 1;
        match quality {
            Some(AnswerQuality::Correct) => {
                self.correct += 1;
                self.correct_with_context += u64::from(global_context_hit);
            }
            Some(AnswerQuality::Hallucination) => self.hallucinations += 1,
            Some(AnswerQuality::Incongruent) => self.incongruent += 1,
            None => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub hallucination_rate: f64,
    pub incongruent_response_rate: f64,
    pub answered_fraction: f64,
    /// Absent for analytically computed reports.
    pub counts: Option<MetricCounts>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("query `{0}` appears more than once")]
    DuplicateQueryId(String),
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> Result<f64, MetricsError> {
    for (name, value) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricsError::OutOfRange { name, value });
        }
    }
    Ok(harmonic(precision, recall))
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl MetricsReport {
    pub fn from_counts(counts: MetricCounts, irr: IrrDenominator) -> Self {
        let provided = counts.answers_provided as f64;
        let precision = ratio(counts.correct as f64, provided);
        let recall = ratio(
            counts.correct_with_context as f64,
            counts.global_context_hits as f64,
        );
        let irr_den = match irr {
            IrrDenominator::AnswersProvided => provided,
            IrrDenominator::TotalQueries => counts.total_queries as f64,
        };
        Self {
            recall,
            precision,
            f1: harmonic(precision, recall),
            hallucination_rate: ratio(counts.hallucinations as f64, provided),
            incongruent_response_rate: ratio(counts.incongruent as f64, irr_den),
            answered_fraction: ratio(provided, counts.total_queries as f64),
            counts: Some(counts),
        }
    }

    /// Builds a report from expected quantities per query.
    pub fn from_expectations(e: &Expectations, irr: IrrDenominator) -> Self {
        let precision = ratio(e.correct, e.answered);
        let recall = ratio(e.correct_with_context, e.context_hit);
        let irr_den = match irr {
            IrrDenominator::AnswersProvided => e.answered,
            IrrDenominator::TotalQueries => 1.0,
        };
        Self {
            recall,
            precision,
            f1: harmonic(precision, recall),
            hallucination_rate: ratio(e.hallucination, e.answered),
            incongruent_response_rate: ratio(e.incongruent, irr_den),
            answered_fraction: e.answered,
            counts: None,
        }
    }
}

/// Per-query expectations (probabilities) of the counted events.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Expectations {
    pub answered: f64,
    pub correct: f64,
    pub correct_with_context: f64,
    pub hallucination: f64,
    pub incongruent: f64,
    pub context_hit: f64,
}

pub fn compute_metrics(
    outcomes: &[QueryOutcome],
    irr: IrrDenominator,
) -> Result<MetricsReport, MetricsError> {
    let mut seen = BTreeSet::new();
    let mut counts = MetricCounts::default();
    for o in outcomes {
        if !seen.insert(o.query_id.as_str()) {
            return Err(MetricsError::DuplicateQueryId(o.query_id.clone()));
        }
        counts.record(o.global_context_hit, o.answered, o.quality);
    }
    Ok(MetricsReport::from_counts(counts, irr))
}
