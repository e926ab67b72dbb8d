//! Ensemble fingerprints and measured-QoS calibration tables.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arbitration::ArbitrationKind;
use crate::evalsim::report::{read_report_csv, ReportRow};
use crate::preprocess::StrategyKind;
use crate::sla::{Observations, QosKind};

/// What determines an ensemble's measured quality: the multiset of agent
/// strategies, the ensemble size, and (for more than one agent) the
/// arbitration threshold and kind.
///
/// A single agent has nothing to arbitrate, so threshold and kind are
/// dropped for `n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub strategies: Vec<StrategyKind>,
    pub threshold: Option<f64>,
    pub arbitration: Option<ArbitrationKind>,
}

impl Fingerprint {
    pub fn new(
        mut strategies: Vec<StrategyKind>,
        threshold: f64,
        arbitration: ArbitrationKind,
    ) -> Self {
        strategies.sort_by_key(|s| s.as_str());
        if strategies.len() == 1 {
            Self {
                strategies,
                threshold: None,
                arbitration: None,
            }
        } else {
            Self {
                strategies,
                threshold: Some(threshold),
                arbitration: Some(arbitration),
            }
        }
    }

    pub fn n(&self) -> usize {
        self.strategies.len()
    }

    /// The canonical string form, also used as a table key.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}", self.n())?;
        if let Some(t) = self.threshold {
            write!(f, ";t={t}")?;
        }
        if let Some(a) = self.arbitration {
            write!(f, ";arb={a}")?;
        }
        let names: Vec<&str> = self.strategies.iter().map(|s| s.as_str()).collect();
        write!(f, ";strategies={}", names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad fingerprint `{input}`: {reason}")]
pub struct FingerprintError {
    pub input: String,
    pub reason: String,
}

impl FromStr for Fingerprint {
    type Err = FingerprintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: String| FingerprintError {
            input: s.to_string(),
            reason,
        };
        let (mut n, mut threshold, mut arbitration, mut strategies) = (None, None, None, None);
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("`{part}` is not key=value")))?;
            match key.trim() {
                "n" => {
                    n = Some(
                        value
                            .trim()
                            .parse::<usize>()
                            .map_err(|e| bad(e.to_string()))?,
                    )
                }
                "t" => {
                    threshold = Some(
                        value
                            .trim()
                            .parse::<f64>()
                            .map_err(|e| bad(e.to_string()))?,
                    )
                }
                "arb" => {
                    arbitration = Some(
                        value
                            .trim()
                            .parse::<ArbitrationKind>()
                            .map_err(|e| bad(e.to_string()))?,
                    )
                }
                "strategies" => {
                    strategies = Some(
                        value
                            .split('+')
                            .map(|v| {
                                v.trim()
                                    .parse::<StrategyKind>()
                                    .map_err(|e| bad(e.to_string()))
                            })
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let strategies = strategies.ok_or_else(|| bad("missing strategies".into()))?;
        if let Some(n) = n {
            if n != strategies.len() {
                return Err(bad(format!(
                    "n={n} but {} strategies listed",
                    strategies.len()
                )));
            }
        }
        if strategies.len() == 1 {
            return Ok(Fingerprint::new(
                strategies,
                0.0,
                ArbitrationKind::RandomNoThreshold,
            ));
        }
        match (threshold, arbitration) {
            (Some(t), Some(a)) if (0.0..=1.0).contains(&t) => {
                Ok(Fingerprint::new(strategies, t, a))
            }
            (Some(t), Some(_)) => Err(bad(format!("threshold {t} outside [0, 1]"))),
            _ => Err(bad(
                "ensembles of two or more agents need `t` and `arb`".into()
            )),
        }
    }
}

/// Measured QoS of one fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEntry {
    pub fingerprint: Fingerprint,
    pub observations: Observations,
}

impl CalibrationEntry {
    pub fn from_report_row(row: &ReportRow) -> Result<Self, CalibrationError> {
        let fingerprint: Fingerprint = row.experiment_version.parse()?;
        let mut observations = Observations::new();
        observations.insert(QosKind::Precision, row.precision);
        observations.insert(QosKind::Recall, row.recall);
        observations.insert(QosKind::F1, row.f1);
        observations.insert(QosKind::HallucinationRate, row.hallucination_rate);
        observations.insert(
            QosKind::IncongruentResponseRate,
            row.incongruent_response_rate,
        );
        if let Some(c) = row.mean_cost {
            observations.insert(QosKind::CostPerQuery, c);
        }
        if let Some(l) = row.p50_latency_ms {
            observations.insert(QosKind::LatencyP50, l);
        }
        Ok(Self {
            fingerprint,
            observations,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("fingerprint `{0}` appears more than once")]
    Duplicate(String),
    #[error("calibration csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Measured QoS keyed by fingerprint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationTable {
    entries: BTreeMap<String, CalibrationEntry>,
}

impl CalibrationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: CalibrationEntry) -> Result<(), CalibrationError> {
        let key = entry.fingerprint.key();
        if self.entries.contains_key(&key) {
            return Err(CalibrationError::Duplicate(key));
        }
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn from_rows(rows: &[ReportRow]) -> Result<Self, CalibrationError> {
        let mut table = Self::new();
        for row in rows {
            table.insert(CalibrationEntry::from_report_row(row)?)?;
        }
        Ok(table)
    }

    /// Reads a report-format CSV whose `experiment_version` column holds fingerprints.
    pub fn read_csv(input: impl Read) -> Result<Self, CalibrationError> {
        Self::from_rows(&read_report_csv(input)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| CalibrationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(file)
    }

    pub fn get(&self, fingerprint: &Fingerprint) -> Option<&CalibrationEntry> {
        self.entries.get(&fingerprint.key())
    }

    pub fn entries(&self) -> impl Iterator<Item = &CalibrationEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
