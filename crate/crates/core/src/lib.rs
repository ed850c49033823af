//! Toolkit for the annotate→train→select active-learning loop over
//! event-structured text annotations.
//!
//! The pipeline stages map onto the top-level modules:
//!
//! * [`corpus`] — section extraction, tokenization, sentence segmentation
//! * [`standoff`] — standoff annotation parsing/serialization and the event
//!   data model (trigger + labeled arguments + span-only arguments)
//! * [`scoring`] — slot-filling evaluation (trigger alignment, labeled and
//!   span-only argument scoring, micro-averaged P/R/F1, Cohen's kappa)
//! * [`vectors`] — TF-IDF-weighted embedding vectors and cosine similarity
//! * [`numcore`] — dense linear algebra, attention pooling, SGD, and a
//!   finite-difference gradient checker
//! * [`surrogate`] — the per-event-type uncertainty classifier
//! * [`extractor`] — the attention + CRF event extractor
//! * [`select`] — the greedy diversity/uncertainty batch query
//! * [`harness`] — synthetic corpora, closed-loop simulation, enrichment
//!   statistics, and Welch's t-test
//! * [`cli`] — the `sdoh-forge` command-line entry points

pub mod corpus;
pub mod error;
pub mod extractor;
pub mod harness;
pub mod scoring;
pub mod select;
pub mod vectors;
pub mod numcore;
pub mod standoff;
pub mod surrogate;

pub use error::{Error, Result};
