//! SLA-aware orchestration of retrieval-augmented question answering agents.
//!
//! The crate is organised around the request path of an intent handler:
//!
//! * [`planning`] classifies a query's intent and picks an ensemble
//!   configuration that satisfies a [`sla::CompositeSla`] at minimum cost.
//! * [`agents`] runs each RAG agent: retrieve ([`retrieval`]), prune the
//!   context ([`preprocess`]), reason, and parse the structured reply.
//! * [`arbitration`] gates the candidate set on the number of affirmative
//!   answers and selects the final answer.
//! * [`engine`] fans agents out concurrently and accounts cost and latency.
//! * [`evalsim`] computes answer-quality metrics and estimates them by Monte
//!   Carlo simulation or exact enumeration.
//!
//! Interchangeable algorithms (preprocessing strategies, arbiters, reasoners)
//! sit behind traits and are looked up by name in a [`registry::Registry`].

pub mod agents;
pub mod arbitration;
pub mod dataset;
pub mod engine;
pub mod evalsim;
pub mod http;
pub mod planning;
pub mod preprocess;
pub mod registry;
pub mod retrieval;
pub mod rng;
pub mod scoring;
pub mod sla;
pub mod text;
