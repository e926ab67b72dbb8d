//! Vertical-aware retrieval over in-memory document stores.
//!
//! Embeddings come from a hashed bag-of-words surrogate (or are supplied
//! with the store file), and search is an exact cosine scan.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a;
use crate::text::word_tokens;

pub const DEFAULT_DIM: usize = 256;
const MIN_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub uid: u64,
    pub vertical: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("document store `{0}` is empty")]
    EmptyStore(String),
    #[error("duplicate uid {uid} in store `{store}`")]
    DuplicateUid { store: String, uid: u64 },
    #[error("embedding dimension must be at least {MIN_DIM}, got {0}")]
    DimensionTooSmall(usize),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Hashed bag-of-words embedding, L2-normalised.
///
/// Each lowercased word token lands in bucket `h mod dim` with a sign taken
/// from the top hash bit. Text without tokens maps to the zero vector.
pub fn embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(
        dim >= MIN_DIM,
        "embedding dimension must be at least {MIN_DIM}"
    );
    let mut signed = vec![0.0; dim];
    let mut unsigned = vec![0.0; dim];
    let mut any = false;
    for token in word_tokens(text) {
        any = true;
        let h = fnv1a(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        signed[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        unsigned[bucket] += 1.0;
    }
    if !any {
        return signed;
    }
    // Signed contributions can cancel exactly; fall back to counts so that
    // any tokenised text still gets a unit vector.
    let v = if norm(&signed) > 0.0 {
        signed
    } else {
        unsigned
    };
    normalize(v)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine_similarity(q: &[f64], d: &[f64]) -> Result<f64, RetrievalError> {
    if q.len() != d.len() {
        return Err(RetrievalError::DimensionMismatch(q.len(), d.len()));
    }
    let (nq, nd) = (norm(q), norm(d));
    if nq == 0.0 || nd == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = q.iter().zip(d).map(|(a, b)| a * b).sum();
    Ok((dot / (nq * nd)).clamp(-1.0, 1.0))
}

/// An immutable set of embedded documents sharing one dimension.
#[derive(Debug, Clone)]
pub struct DocumentStore {
    label: String,
    dim: usize,
    docs: Vec<Document>,
}

impl DocumentStore {
    /// Builds a store, embedding documents that carry no precomputed vector.
    ///
    /// Precomputed vectors fix the store dimension and are renormalised.
    pub fn new(
        label: impl Into<String>,
        docs: Vec<Document>,
        default_dim: usize,
    ) -> Result<Self, RetrievalError> {
        let label = label.into();
        let dim = docs
            .iter()
            .find_map(|d| d.embedding.as_ref().map(Vec::len))
            .unwrap_or(default_dim);
        if dim < MIN_DIM {
            return Err(RetrievalError::DimensionTooSmall(dim));
        }
        let mut seen = BTreeSet::new();
        let mut embedded = Vec::with_capacity(docs.len());
        for mut doc in docs {
            if !seen.insert(doc.uid) {
                return Err(RetrievalError::DuplicateUid {
                    store: label.clone(),
                    uid: doc.uid,
                });
            }
            let v = match doc.embedding.take() {
                Some(v) if v.len() != dim => {
                    return Err(RetrievalError::DimensionMismatch(v.len(), dim))
                }
                Some(v) => normalize(v),
                None => embed(&doc.body, dim),
            };
            doc.embedding = Some(v);
            embedded.push(doc);
        }
        Ok(Self {
            label,
            dim,
            docs: embedded,
        })
    }

    /// Reads a JSONL store file (`uid`, `vertical`, `body`, optional `embedding`).
    pub fn load(
        label: impl Into<String>,
        path: impl AsRef<Path>,
        default_dim: usize,
    ) -> Result<Self, RetrievalError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let file = File::open(path).map_err(|source| RetrievalError::Io {
            path: shown.clone(),
            source,
        })?;
        let mut docs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| RetrievalError::Io {
                path: shown.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line).map_err(|e| RetrievalError::Parse {
                path: shown.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        Self::new(label, docs, default_dim)
    }

    /// Writes documents without their embeddings (they are recomputed on load).
    pub fn write_jsonl(docs: &[Document], mut out: impl Write) -> std::io::Result<()> {
        for doc in docs {
            let bare = Document {
                embedding: None,
                ..doc.clone()
            };
            serde_json::to_writer(&mut out, &bare)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredDoc {
    pub doc: Document,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vertical {
    pub label: String,
    pub docs: Vec<ScoredDoc>,
}

impl Vertical {
    fn best(&self) -> f64 {
        self.docs.first().map_or(f64::NEG_INFINITY, |d| d.score)
    }
}

/// Search results grouped by vertical, most relevant vertical first.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VerticalResults {
    pub verticals: Vec<Vertical>,
}

fn doc_order(a: &ScoredDoc, b: &ScoredDoc) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.doc.uid.cmp(&b.doc.uid))
}

impl VerticalResults {
    /// Groups scored documents, keeping the top `top_k` per vertical, and
    /// ranks verticals by their best score (ties: label).
    pub fn from_scored(scored: impl IntoIterator<Item = ScoredDoc>, top_k: usize) -> Self {
        let mut groups: BTreeMap<String, Vec<ScoredDoc>> = BTreeMap::new();
        for sd in scored {
            groups.entry(sd.doc.vertical.clone()).or_default().push(sd);
        }
        let mut verticals: Vec<Vertical> = groups
            .into_iter()
            .map(|(label, mut docs)| {
                docs.sort_by(doc_order);
                docs.truncate(top_k);
                Vertical { label, docs }
            })
            .filter(|v| !v.docs.is_empty())
            .collect();
        verticals.sort_by(|a, b| {
            b.best()
                .total_cmp(&a.best())
                .then_with(|| a.label.cmp(&b.label))
        });
        Self { verticals }
    }

    /// Combines results from several stores into one ranking.
    pub fn merge(parts: impl IntoIterator<Item = VerticalResults>, top_k: usize) -> Self {
        Self::from_scored(
            parts
                .into_iter()
                .flat_map(|r| r.verticals)
                .flat_map(|v| v.docs),
            top_k,
        )
    }

    /// Documents in vertical-rank order, then within-vertical order.
    pub fn flatten(&self) -> impl Iterator<Item = &ScoredDoc> {
        self.verticals.iter().flat_map(|v| v.docs.iter())
    }

    pub fn doc_count(&self) -> usize {
        self.verticals.iter().map(|v| v.docs.len()).sum()
    }
}

/// Exhaustive cosine search, returning the top `top_k_per_vertical` documents per vertical.
pub fn search(
    query: &str,
    store: &DocumentStore,
    top_k_per_vertical: usize,
) -> Result<VerticalResults, RetrievalError> {
    if store.is_empty() {
        return Err(RetrievalError::EmptyStore(store.label.clone()));
    }
    let q = embed(query, store.dim);
    let scored = store
        .docs
        .iter()
        .map(|doc| {
            let v = doc
                .embedding
                .as_deref()
                .expect("store documents are embedded");
            Ok(ScoredDoc {
                doc: doc.clone(),
                score: cosine_similarity(&q, v)?,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    Ok(VerticalResults::from_scored(scored, top_k_per_vertical))
}
