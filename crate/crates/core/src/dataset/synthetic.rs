//! Seeded synthetic corpora: a document store plus an annotated dataset
//! whose per-agent outcomes are drawn from calibrated profiles.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

use super::{
    AnnotatedDataset, AnnotatedRecord, AnswerProvision, AnswerQuality, ContextAvailability,
    IntentLabel,
};
use crate::agents::reasoner::sample_outcome;
use crate::agents::AgentProfile;
use crate::retrieval::Document;
use crate::rng::{agent_stream, derive_seed, Stream};

const VERTICALS: [&str; 4] = ["billing", "devices", "accounts", "shipping"];
const ACTIONS: [&str; 8] = [
    "reset",
    "update",
    "cancel",
    "configure",
    "replace",
    "transfer",
    "verify",
    "restore",
];
const OBJECTS: [&str; 10] = [
    "router",
    "password",
    "invoice",
    "subscription",
    "phone",
    "address",
    "warranty",
    "payment method",
    "backup",
    "delivery slot",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub queries: usize,
    /// `(agent_id, profile)` pairs; one record per agent per query.
    pub agents: Vec<(String, AgentProfile)>,
    /// Probability that a query's answer is present in the corpus.
    pub p_global_context: f64,
    /// Unrelated documents added per query.
    pub distractors_per_query: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<Document>,
    pub dataset: AnnotatedDataset,
}

fn query_text(i: usize) -> (String, String) {
    let action = ACTIONS[i % ACTIONS.len()];
    let object = OBJECTS[(i / ACTIONS.len()) % OBJECTS.len()];
    let q = format!("How do I {action} my {object}?");
    let body = format!(
        "To {action} your {object}, open the settings page, choose {object}, select {action} and confirm. \
         The change takes effect within a few minutes. Reference article {i}."
    );
    (q, body)
}

/// Builds the corpus. Query `i` has a matching document unless its context
/// draw misses, in which case every agent sees no grounding and a sampled
/// "correct" answer is recorded as a hallucination.
pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut corpus_rng = Stream::seed_from_u64(derive_seed(spec.seed, &["synthetic", "corpus"]));
    let mut documents = Vec::new();
    let mut records = Vec::new();
    let mut next_uid = 1u64;
    for i in 0..spec.queries {
        let query_id = format!("q{i:05}");
        let (query, body) = query_text(i);
        let hit = corpus_rng.gen::<f64>() < spec.p_global_context;
        let mut answer_uid = None;
        if hit {
            let vertical = VERTICALS.choose(&mut corpus_rng).expect("non-empty");
            documents.push(Document {
                uid: next_uid,
                vertical: vertical.to_string(),
                body,
                embedding: None,
            });
            answer_uid = Some(next_uid);
            next_uid += 1;
        }
        for d in 0..spec.distractors_per_query {
            let vertical = VERTICALS.choose(&mut corpus_rng).expect("non-empty");
            documents.push(Document {
                uid: next_uid,
                vertical: vertical.to_string(),
                body: format!("Store notice {i}-{d}: opening hours and holiday schedule for the {vertical} desk."),
                embedding: None,
            });
            next_uid += 1;
        }
        let availability = if hit {
            ContextAvailability::AnswerExistsInContext
        } else {
            ContextAvailability::AnswerDoesNotExist
        };
        for (agent_id, profile) in &spec.agents {
            let mut rng = agent_stream(spec.seed, agent_id, &query_id);
            let quality = match sample_outcome(profile, &mut rng) {
                Some(AnswerQuality::Correct) if !hit => Some(AnswerQuality::Hallucination),
                other => other,
            };
            let answer_text = quality.map(|q| match q {
                AnswerQuality::Correct => {
                    format!("Open settings, choose the item and select the action ({query_id}).")
                }
                AnswerQuality::Hallucination => {
                    "This happens automatically; no action is needed.".to_string()
                }
                AnswerQuality::Incongruent => {
                    "Our opening hours are listed on the store page.".to_string()
                }
            });
            records.push(AnnotatedRecord {
                query_id: query_id.clone(),
                agent_id: agent_id.clone(),
                query: query.clone(),
                intent: IntentLabel::DirectlyAnswerable,
                context_docs: answer_uid.into_iter().collect(),
                answer_text,
                context_availability: availability,
                answer_provision: if quality.is_some() {
                    AnswerProvision::AnswerProvided
                } else {
                    AnswerProvision::NoAnswerProvided
                },
                answer_quality: quality,
            });
        }
    }
    let dataset = AnnotatedDataset::from_records(records).expect("generated records are valid");
    SyntheticCorpus { documents, dataset }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            queries: 400,
            agents: vec![
                ("a".into(), AgentProfile::new(0.9, 0.7, 0.2, 0.1).unwrap()),
                ("b".into(), AgentProfile::new(0.8, 0.6, 0.3, 0.1).unwrap()),
            ],
            p_global_context: 0.75,
            distractors_per_query: 2,
            seed,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&spec(3)), generate(&spec(3)));
        assert_ne!(generate(&spec(3)).dataset, generate(&spec(4)).dataset);
    }

    #[test]
    fn shape_and_hit_rate() {
        let c = generate(&spec(11));
        assert_eq!(c.dataset.len(), 800);
        let hits = c
            .dataset
            .global_context_index()
            .values()
            .filter(|h| **h)
            .count();
        assert!((hits as f64 / 400.0 - 0.75).abs() < 0.08);
        assert_eq!(c.documents.len(), hits + 800);
        let uids: std::collections::BTreeSet<u64> = c.documents.iter().map(|d| d.uid).collect();
        assert_eq!(uids.len(), c.documents.len());
    }

    #[test]
    fn no_correct_answer_without_context() {
        let c = generate(&spec(5));
        for r in c.dataset.records() {
            if !c.dataset.global_context_hit(&r.query_id).unwrap() {
                assert_ne!(r.answer_quality, Some(AnswerQuality::Correct));
            }
        }
    }
}
