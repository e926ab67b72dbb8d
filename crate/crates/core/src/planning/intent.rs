//! Rule-based intent detection.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::IntentLabel;

/// Maps a query to an intent label. Rule packs are one implementation;
/// learned classifiers can be slotted in behind the same trait.
pub trait IntentClassifier: Send + Sync {
    fn classify(&self, query: &str) -> IntentLabel;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentRule {
    /// Regular expression matched against the lowercased query.
    pub pattern: String,
    pub label: IntentLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentRulePackConfig {
    pub rules: Vec<IntentRule>,
    #[serde(default = "default_label")]
    pub default_label: IntentLabel,
}

fn default_label() -> IntentLabel {
    IntentLabel::Other
}

/// Ordered rules; the first match wins, `default_label` otherwise.
#[derive(Debug, Clone)]
pub struct IntentRulePack {
    rules: Vec<(Regex, IntentLabel)>,
    default_label: IntentLabel,
}

const DEFAULT_RULES: &[(&str, IntentLabel)] = &[
    (
        r"\bnear me\b|\bnearby\b|\bclosest\b",
        IntentLabel::RequestForList,
    ),
    (
        r"^(list|name|show me)\b|\bwhat are some\b|\btop \d+\b",
        IntentLabel::RequestForList,
    ),
    (
        r"\b(summari[sz]e|summary|overview|tl;?dr)\b",
        IntentLabel::RequestForSummarization,
    ),
    (
        r"\b(buy|purchase|pricing|quote|discount|sales rep|subscribe)\b",
        IntentLabel::SalesInquiry,
    ),
    (
        r"^(how|what|when|where|why|who|which|can|could|does|do|did|is|are|should|will|would)\b|\?\s*$",
        IntentLabel::DirectlyAnswerable,
    ),
    (r"\S", IntentLabel::NonQuestionStatement),
];

impl IntentRulePack {
    pub fn new(config: &IntentRulePackConfig) -> Result<Self, regex::Error> {
        let rules = config
            .rules
            .iter()
            .map(|r| Ok((Regex::new(&r.pattern)?, r.label)))
            .collect::<Result<_, regex::Error>>()?;
        Ok(Self {
            rules,
            default_label: config.default_label,
        })
    }

    pub fn default_config() -> IntentRulePackConfig {
        IntentRulePackConfig {
            rules: DEFAULT_RULES
                .iter()
                .map(|(p, l)| IntentRule {
                    pattern: (*p).to_string(),
                    label: *l,
                })
                .collect(),
            default_label: IntentLabel::Other,
        }
    }

    pub fn default_label(&self) -> IntentLabel {
        self.default_label
    }
}

impl Default for IntentRulePack {
    fn default() -> Self {
        Self::new(&Self::default_config()).expect("built-in rules compile")
    }
}

impl IntentClassifier for IntentRulePack {
    fn classify(&self, query: &str) -> IntentLabel {
        classify_intent(query, self)
    }
}

pub fn classify_intent(query: &str, rules: &IntentRulePack) -> IntentLabel {
    let lowered = query.trim().to_lowercase();
    rules
        .rules
        .iter()
        .find(|(re, _)| re.is_match(&lowered))
        .map_or(rules.default_label, |(_, label)| *label)
}
