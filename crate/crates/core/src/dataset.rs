//! Annotated (query, context, answer) records and their JSONL loader.
//!
//! One record describes what one agent did for one query. The per-query
//! "answer exists somewhere in the union of all agents' contexts" flag is
//! derived from the records when the dataset is built.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub mod synthetic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentLabel {
    DirectlyAnswerable,
    RequestForSummarization,
    NonQuestionStatement,
    RequestForList,
    SalesInquiry,
    Other,
}

impl IntentLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::DirectlyAnswerable => "directly_answerable",
            IntentLabel::RequestForSummarization => "request_for_summarization",
            IntentLabel::NonQuestionStatement => "non_question_statement",
            IntentLabel::RequestForList => "request_for_list",
            IntentLabel::SalesInquiry => "sales_inquiry",
            IntentLabel::Other => "other",
        }
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IntentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown intent label `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextAvailability {
    #[serde(rename = "exists")]
    AnswerExistsInContext,
    #[serde(rename = "not_exists")]
    AnswerDoesNotExist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerProvision {
    #[serde(rename = "provided")]
    AnswerProvided,
    #[serde(rename = "not_provided")]
    NoAnswerProvided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerQuality {
    Correct,
    Hallucination,
    Incongruent,
}

/// The three annotation attributes attached to every answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerAnnotation {
    pub context_availability: ContextAvailability,
    pub answer_provision: AnswerProvision,
    /// Present exactly when an answer was provided.
    pub answer_quality: Option<AnswerQuality>,
}

impl AnswerAnnotation {
    pub fn negative(context_availability: ContextAvailability) -> Self {
        Self {
            context_availability,
            answer_provision: AnswerProvision::NoAnswerProvided,
            answer_quality: None,
        }
    }

    pub fn provided(context_availability: ContextAvailability, quality: AnswerQuality) -> Self {
        Self {
            context_availability,
            answer_provision: AnswerProvision::AnswerProvided,
            answer_quality: Some(quality),
        }
    }

    pub fn is_provided(&self) -> bool {
        self.answer_provision == AnswerProvision::AnswerProvided
    }
}

/// One line of a dataset file. Field names are the on-disk schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedRecord {
    pub query_id: String,
    pub agent_id: String,
    pub query: String,
    pub intent: IntentLabel,
    #[serde(rename = "context_uids")]
    pub context_docs: Vec<u64>,
    pub answer_text: Option<String>,
    pub context_availability: ContextAvailability,
    pub answer_provision: AnswerProvision,
    pub answer_quality: Option<AnswerQuality>,
}

impl AnnotatedRecord {
    pub fn annotation(&self) -> AnswerAnnotation {
        AnswerAnnotation {
            context_availability: self.context_availability,
            answer_provision: self.answer_provision,
            answer_quality: self.answer_quality,
        }
    }

    fn id(&self) -> String {
        format!("{}/{}", self.query_id, self.agent_id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {record}: invalid `{field}`: {reason}")]
    Validation {
        record: String,
        field: &'static str,
        reason: String,
    },
}

/// Checks the record-level invariants, reporting the first violated field.
pub fn validate_record(record: &AnnotatedRecord) -> Result<(), DatasetError> {
    let fail = |field: &'static str, reason: &str| {
        Err(DatasetError::Validation {
            record: record.id(),
            field,
            reason: reason.to_string(),
        })
    };
    if record.query_id.is_empty() {
        return fail("query_id", "must not be empty");
    }
    if record.agent_id.is_empty() {
        return fail("agent_id", "must not be empty");
    }
    let provided = record.answer_provision == AnswerProvision::AnswerProvided;
    if provided != record.answer_quality.is_some() {
        return fail(
            "answer_quality",
            "must be present exactly when an answer was provided",
        );
    }
    if provided != record.answer_text.is_some() {
        return fail(
            "answer_text",
            "must be present exactly when an answer was provided",
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotatedDataset {
    records: Vec<AnnotatedRecord>,
    index: BTreeMap<(String, String), usize>,
    global_context_index: BTreeMap<String, bool>,
    query_order: Vec<String>,
}

impl AnnotatedDataset {
    /// Validates every record and derives the per-query global context flag.
    pub fn from_records(records: Vec<AnnotatedRecord>) -> Result<Self, DatasetError> {
        let mut index = BTreeMap::new();
        let mut global_context_index: BTreeMap<String, bool> = BTreeMap::new();
        let mut query_order = Vec::new();
        for (i, record) in records.iter().enumerate() {
            validate_record(record)?;
            let key = (record.query_id.clone(), record.agent_id.clone());
            if index.insert(key, i).is_some() {
                return Err(DatasetError::Validation {
                    record: record.id(),
                    field: "agent_id",
                    reason: "duplicate (query_id, agent_id) pair".into(),
                });
            }
            let exists = record.context_availability == ContextAvailability::AnswerExistsInContext;
            match global_context_index.get_mut(&record.query_id) {
                Some(flag) => *flag |= exists,
                None => {
                    query_order.push(record.query_id.clone());
                    global_context_index.insert(record.query_id.clone(), exists);
                }
            }
        }
        Ok(Self {
            records,
            index,
            global_context_index,
            query_order,
        })
    }

    pub fn records(&self) -> &[AnnotatedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, query_id: &str, agent_id: &str) -> Option<&AnnotatedRecord> {
        self.index
            .get(&(query_id.to_string(), agent_id.to_string()))
            .map(|&i| &self.records[i])
    }

    /// Whether the answer exists in the union of all agents' contexts.
    pub fn global_context_hit(&self, query_id: &str) -> Option<bool> {
        self.global_context_index.get(query_id).copied()
    }

    pub fn global_context_index(&self) -> &BTreeMap<String, bool> {
        &self.global_context_index
    }

    /// Distinct queries in first-appearance order as `(query_id, query text)`.
    pub fn queries(&self) -> Vec<(&str, &str)> {
        self.query_order
            .iter()
            .map(|q| {
                let rec = self
                    .records
                    .iter()
                    .find(|r| &r.query_id == q)
                    .expect("indexed query");
                (rec.query_id.as_str(), rec.query.as_str())
            })
            .collect()
    }

    pub fn agent_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.agent_id.as_str()).collect()
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let io = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }
}

/// Parses JSONL records from a reader. Blank lines are skipped; line numbers are 1-based.
pub fn read_dataset(reader: impl BufRead) -> Result<AnnotatedDataset, DatasetError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotatedRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    AnnotatedDataset::from_records(records)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<AnnotatedDataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(BufReader::new(file))
}
