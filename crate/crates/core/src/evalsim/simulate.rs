//! Monte Carlo ensemble simulation and its exact enumeration counterpart.
//!
//! Agents are modelled as independent draws from their [`AgentProfile`]s.
//! When the answer is absent from every context (probability
//! `1 - p_global_context`), a "correct" draw cannot be grounded and is
//! counted as a hallucination instead.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{Expectations, IrrDenominator, MetricCounts, MetricsReport};
use crate::agents::{sample_outcome, AgentProfile, LatencyModel};
use crate::arbitration::{required_affirmatives, ArbitrationStrategy};
use crate::dataset::AnswerQuality;
use crate::engine::accounting::AccountingParams;
use crate::rng::{trial_stream, Stream};

/// How the simulated relevance scorer ranks affirmative answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerModel {
    /// Scores carry no information: the top answer is a uniform pick.
    #[default]
    Uniform,
    /// A correct answer outranks every other answer; the rest tie randomly.
    OracleFavorsCorrect,
}

pub const MAX_ORACLE_AGENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("ensemble size {n} does not match {profiles} profiles")]
    ProfileMismatch { n: usize, profiles: usize },
    #[error("exact enumeration supports at most {MAX_ORACLE_AGENTS} agents, got {0}")]
    TooManyAgents(usize),
    #[error("invalid simulation input: {0}")]
    Invalid(String),
}

/// Per-agent cost and latency inputs for simulated accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimAccounting {
    pub agent_costs: Vec<f64>,
    pub latency_models: Vec<LatencyModel>,
    pub params: AccountingParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub profiles: Vec<AgentProfile>,
    pub strategy: ArbitrationStrategy,
    pub scorer_model: ScorerModel,
    pub trials: u64,
    pub seed: u64,
    pub p_global_context: f64,
    pub irr: IrrDenominator,
    pub accounting: Option<SimAccounting>,
}

impl SimulationSpec {
    pub fn new(
        profiles: Vec<AgentProfile>,
        strategy: ArbitrationStrategy,
        scorer_model: ScorerModel,
    ) -> Self {
        Self {
            profiles,
            strategy,
            scorer_model,
            trials: 100_000,
            seed: 0,
            p_global_context: 1.0,
            irr: IrrDenominator::AnswersProvided,
            accounting: None,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        for p in &self.profiles {
            p.validate().map_err(SimError::Invalid)?;
        }
        if !(0.0..=1.0).contains(&self.p_global_context) {
            return Err(SimError::Invalid(format!(
                "p_global_context = {}",
                self.p_global_context
            )));
        }
        if let Some(acc) = &self.accounting {
            let n = self.profiles.len();
            if acc.agent_costs.len() != n || acc.latency_models.len() != n {
                return Err(SimError::ProfileMismatch {
                    n: acc.agent_costs.len(),
                    profiles: n,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub metrics: MetricsReport,
    pub mean_cost: Option<f64>,
    pub p50_latency_ms: Option<f64>,
    pub max_latency_ms: Option<f64>,
}

struct Trial {
    counts: MetricCounts,
    latency_ms: Option<f64>,
}

fn run_trial(spec: &SimulationSpec, index: u64) -> Trial {
    let mut rng: Stream = trial_stream(spec.seed, index);
    let hit = rng.gen::<f64>() < spec.p_global_context;
    let outcomes: Vec<Option<AnswerQuality>> = spec
        .profiles
        .iter()
        .map(|p| match sample_outcome(p, &mut rng) {
            Some(AnswerQuality::Correct) if !hit => Some(AnswerQuality::Hallucination),
            other => other,
        })
        .collect();
    let latency_ms = spec.accounting.as_ref().map(|acc| {
        let slowest = acc
            .latency_models
            .iter()
            .map(|m| m.sample(&mut rng))
            .fold(0.0, f64::max);
        let n = spec.profiles.len();
        acc.params.overhead_latency_ms + slowest + acc.params.arbitration_latency.eval(n)
    });

    let affirmative: Vec<AnswerQuality> = outcomes.iter().flatten().copied().collect();
    let k = required_affirmatives(
        outcomes.len(),
        spec.strategy.threshold,
        spec.strategy.rounding,
    );
    let blocked =
        affirmative.is_empty() || (spec.strategy.kind.is_gated() && affirmative.len() < k);
    let selected = if blocked {
        None
    } else {
        let index = match (spec.strategy.kind.uses_scorer(), spec.scorer_model) {
            (false, _) => rng.gen_range(0..affirmative.len()),
            (true, model) => {
                let bonus = |q: AnswerQuality| match model {
                    ScorerModel::OracleFavorsCorrect if q == AnswerQuality::Correct => 1.0,
                    _ => 0.0,
                };
                let scores: Vec<f64> = affirmative
                    .iter()
                    .map(|q| bonus(*q) + rng.gen::<f64>())
                    .collect();
                (0..scores.len())
                    .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
                    .expect("non-empty")
            }
        };
        Some(affirmative[index])
    };
    let mut counts = MetricCounts::default();
    counts.record(hit, selected.is_some(), selected);
    Trial { counts, latency_ms }
}

/// Estimates ensemble metrics from `spec.trials` independent simulated queries.
///
/// Trial `i` draws only from its own stream, so the result does not depend
/// on how trials are spread over threads.
pub fn monte_carlo(spec: &SimulationSpec, n: usize) -> Result<SimulationResult, SimError> {
    if n != spec.profiles.len() {
        return Err(SimError::ProfileMismatch {
            n,
            profiles: spec.profiles.len(),
        });
    }
    if spec.trials == 0 {
        return Err(SimError::Invalid("trials must be at least 1".into()));
    }
    spec.validate()?;
    let trials: Vec<Trial> = (0..spec.trials)
        .into_par_iter()
        .map(|i| run_trial(spec, i))
        .collect();
    let mut counts = MetricCounts::default();
    trials.iter().for_each(|t| counts.add(&t.counts));

    let (mean_cost, p50, max) = match &spec.accounting {
        None => (None, None, None),
        Some(acc) => {
            let cost = acc.params.overhead_cost
                + acc.agent_costs.iter().sum::<f64>()
                + acc.params.arbitration_cost.eval(spec.profiles.len());
            let mut lat: Vec<f64> = trials.iter().filter_map(|t| t.latency_ms).collect();
            lat.sort_by(f64::total_cmp);
            (
                Some(cost),
                Some(percentile_nearest_rank(&lat, 0.5)),
                lat.last().copied(),
            )
        }
    };
    Ok(SimulationResult {
        metrics: MetricsReport::from_counts(counts, spec.irr),
        mean_cost,
        p50_latency_ms: p50,
        max_latency_ms: max,
    })
}

/// Nearest-rank percentile of sorted data; 0 for empty input.
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Exact expected metrics by enumerating every joint agent outcome.
///
/// Each agent is negative, correct, hallucinated or incongruent, so the
/// enumeration visits `4^N` outcomes (times two context cases).
pub fn brute_force_ensemble_oracle(
    profiles: &[AgentProfile],
    strategy: &ArbitrationStrategy,
    scorer_model: ScorerModel,
    p_global_context: f64,
    irr: IrrDenominator,
) -> Result<MetricsReport, SimError> {
    let n = profiles.len();
    if n > MAX_ORACLE_AGENTS {
        return Err(SimError::TooManyAgents(n));
    }
    if n == 0 {
        return Err(SimError::ProfileMismatch { n: 0, profiles: 0 });
    }
    for p in profiles {
        p.validate().map_err(SimError::Invalid)?;
    }
    let k = required_affirmatives(n, strategy.threshold, strategy.rounding);
    let favors_correct =
        strategy.kind.uses_scorer() && scorer_model == ScorerModel::OracleFavorsCorrect;
    let mut e = Expectations {
        context_hit: p_global_context,
        ..Default::default()
    };

    for (hit, weight) in [(true, p_global_context), (false, 1.0 - p_global_context)] {
        if weight == 0.0 {
            continue;
        }
        // Per-agent probabilities of [negative, correct, hallucination, incongruent].
        let dist: Vec<[f64; 4]> = profiles
            .iter()
            .map(|p| {
                let a = p.p_affirmative;
                let (c, h) = if hit {
                    (a * p.p_correct, a * p.p_hallucination)
                } else {
                    (0.0, a * (p.p_correct + p.p_hallucination))
                };
                [1.0 - a, c, h, a * p.p_incongruent]
            })
            .collect();
        for code in 0..4usize.pow(n as u32) {
            let mut prob = weight;
            let mut tally = [0usize; 4];
            let mut rest = code;
            for d in &dist {
                let outcome = rest % 4;
                rest /= 4;
                prob *= d[outcome];
                tally[outcome] += 1;
            }
            if prob == 0.0 {
                continue;
            }
            let [_, c, h, i] = tally;
            let a = c + h + i;
            if a == 0 || (strategy.kind.is_gated() && a < k) {
                continue;
            }
            let (pc, ph, pi) = if favors_correct && c > 0 {
                (1.0, 0.0, 0.0)
            } else if favors_correct {
                (0.0, h as f64 / a as f64, i as f64 / a as f64)
            } else {
                (
                    c as f64 / a as f64,
                    h as f64 / a as f64,
                    i as f64 / a as f64,
                )
            };
            e.answered += prob;
            e.correct += prob * pc;
            if hit {
                e.correct_with_context += prob * pc;
            }
            e.hallucination += prob * ph;
            e.incongruent += prob * pi;
        }
    }
    Ok(MetricsReport::from_expectations(&e, irr))
}
