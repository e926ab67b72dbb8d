//! QoS attributes, service level objectives, and composite SLAs.
//!
//! A [`CompositeSla`] is an ordered list of per-attribute [`Slo`]s combined
//! by conjunction: the SLA holds when every objective holds. Boundaries are
//! inclusive in both directions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Measurable quality dimensions of the QA service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QosKind {
    Precision,
    Recall,
    F1,
    HallucinationRate,
    IncongruentResponseRate,
    CostPerQuery,
    LatencyP50,
    LatencyMax,
}

impl QosKind {
    pub const ALL: [QosKind; 8] = [
        QosKind::Precision,
        QosKind::Recall,
        QosKind::F1,
        QosKind::HallucinationRate,
        QosKind::IncongruentResponseRate,
        QosKind::CostPerQuery,
        QosKind::LatencyP50,
        QosKind::LatencyMax,
    ];

    /// Unitless rates and scores, bounded to `[0, 1]`.
    pub fn is_rate(self) -> bool {
        !matches!(
            self,
            QosKind::CostPerQuery | QosKind::LatencyP50 | QosKind::LatencyMax
        )
    }

    /// The only direction an objective on this attribute may take.
    pub fn required_direction(self) -> Direction {
        match self {
            QosKind::Precision | QosKind::Recall | QosKind::F1 => Direction::AtLeast,
            _ => Direction::AtMost,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QosKind::Precision => "precision",
            QosKind::Recall => "recall",
            QosKind::F1 => "f1",
            QosKind::HallucinationRate => "hallucination_rate",
            QosKind::IncongruentResponseRate => "incongruent_response_rate",
            QosKind::CostPerQuery => "cost_per_query",
            QosKind::LatencyP50 => "latency_p50",
            QosKind::LatencyMax => "latency_max",
        }
    }

    fn value_in_range(self, value: f64) -> bool {
        if self.is_rate() {
            (0.0..=1.0).contains(&value)
        } else {
            value >= 0.0 && value.is_finite()
        }
    }
}

impl fmt::Display for QosKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QosKind {
    type Err = SlaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QosKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SlaError::UnknownAttribute(s.to_string()))
    }
}

/// A single observed or targeted attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosAttribute {
    pub kind: QosKind,
    pub value: f64,
}

impl QosAttribute {
    pub fn new(kind: QosKind, value: f64) -> Result<Self, SlaError> {
        if !kind.value_in_range(value) {
            return Err(SlaError::OutOfRange {
                attribute: kind,
                value,
            });
        }
        Ok(Self { kind, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

/// One service level objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slo {
    pub attribute: QosKind,
    pub direction: Direction,
    pub target: f64,
}

impl Slo {
    pub fn at_least(attribute: QosKind, target: f64) -> Self {
        Self {
            attribute,
            direction: Direction::AtLeast,
            target,
        }
    }

    pub fn at_most(attribute: QosKind, target: f64) -> Self {
        Self {
            attribute,
            direction: Direction::AtMost,
            target,
        }
    }

    /// Inclusive comparison of an observation against the target.
    pub fn is_met_by(&self, observed: f64) -> bool {
        match self.direction {
            Direction::AtLeast => observed >= self.target,
            Direction::AtMost => observed <= self.target,
        }
    }

    fn validate(&self) -> Result<(), SlaError> {
        if self.direction != self.attribute.required_direction() {
            return Err(SlaError::InvalidDirection {
                attribute: self.attribute,
                direction: self.direction,
            });
        }
        QosAttribute::new(self.attribute, self.target).map(|_| ())
    }
}

impl fmt::Display for Slo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.direction {
            Direction::AtLeast => ">=",
            Direction::AtMost => "<=",
        };
        write!(f, "{}{}{}", self.attribute, op, self.target)
    }
}

impl FromStr for Slo {
    type Err = SlaError;

    /// Parses `attribute<=target` or `attribute>=target`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, direction, rest) = if let Some((a, b)) = s.split_once("<=") {
            (a, Direction::AtMost, b)
        } else if let Some((a, b)) = s.split_once(">=") {
            (a, Direction::AtLeast, b)
        } else {
            return Err(SlaError::Syntax(s.to_string()));
        };
        let target: f64 = rest
            .trim()
            .parse()
            .map_err(|_| SlaError::Syntax(s.to_string()))?;
        let slo = Slo {
            attribute: name.trim().parse()?,
            direction,
            target,
        };
        slo.validate()?;
        Ok(slo)
    }
}

/// How the per-objective predicates are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combination {
    #[default]
    Conjunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSla {
    pub name: String,
    pub slos: Vec<Slo>,
    pub combination: Combination,
}

impl CompositeSla {
    pub fn slo(&self, kind: QosKind) -> Option<&Slo> {
        self.slos.iter().find(|s| s.attribute == kind)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlaError {
    #[error("SLA must contain at least one objective")]
    EmptySloList,
    #[error("attribute `{0}` appears in more than one objective")]
    DuplicateAttribute(QosKind),
    #[error("objective on `{attribute}` cannot use direction {direction:?}")]
    InvalidDirection {
        attribute: QosKind,
        direction: Direction,
    },
    #[error("value {value} out of range for `{attribute}`")]
    OutOfRange { attribute: QosKind, value: f64 },
    #[error("no observation for `{0}`")]
    MissingObservation(QosKind),
    #[error("unknown QoS attribute `{0}`")]
    UnknownAttribute(String),
    #[error("cannot parse objective `{0}`; expected `attribute<=value` or `attribute>=value`")]
    Syntax(String),
}

/// Validates `slos` and combines them by conjunction.
pub fn compose_sla(slos: Vec<Slo>) -> Result<CompositeSla, SlaError> {
    compose_named_sla("composite", slos)
}

pub fn compose_named_sla(
    name: impl Into<String>,
    slos: Vec<Slo>,
) -> Result<CompositeSla, SlaError> {
    if slos.is_empty() {
        return Err(SlaError::EmptySloList);
    }
    for (i, slo) in slos.iter().enumerate() {
        if slos[..i].iter().any(|s| s.attribute == slo.attribute) {
            return Err(SlaError::DuplicateAttribute(slo.attribute));
        }
        slo.validate()?;
    }
    Ok(CompositeSla {
        name: name.into(),
        slos,
        combination: Combination::Conjunction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SloCompliance {
    pub slo: Slo,
    pub observed: f64,
    pub compliant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub per_slo: Vec<SloCompliance>,
    pub overall: bool,
}

pub type Observations = BTreeMap<QosKind, f64>;

/// Checks every objective of `sla` against `observed`.
pub fn evaluate_slo(
    observed: &Observations,
    sla: &CompositeSla,
) -> Result<ComplianceReport, SlaError> {
    let per_slo = sla
        .slos
        .iter()
        .map(|slo| {
            let value = *observed
                .get(&slo.attribute)
                .ok_or(SlaError::MissingObservation(slo.attribute))?;
            Ok(SloCompliance {
                slo: *slo,
                observed: value,
                compliant: slo.is_met_by(value),
            })
        })
        .collect::<Result<Vec<_>, SlaError>>()?;
    let overall = match sla.combination {
        Combination::Conjunction => per_slo.iter().all(|c| c.compliant),
    };
    Ok(ComplianceReport { per_slo, overall })
}
