//! darkmine: an offline-testable darknet/deepnet threat-intelligence
//! pipeline.
//!
//! The crate crawls and parses marketplace and forum pages into structured
//! records, classifies them as malicious-hacking-relevant with supervised
//! and semi-supervised character n-gram classifiers, evaluates with
//! site-aware cross-validation, and runs analyst reports over the results
//! (zero-day candidates, cross-site user graphs, power-law presence).
//!
//! Start with the runnable programs in `examples/`; each one exercises a
//! single capability end to end on deterministic fixtures or synthetic
//! corpora. The `darkmine` binary wires the same library calls into a
//! config-driven pipeline (`crawl`, `parse`, `label`, `train`, `classify`,
//! `evaluate`, `analyze`, `report`).

pub mod analytics;
pub mod cli;
pub mod crawler;
pub mod datamodel;
pub mod error;
pub mod evalharness;
pub mod learners;
pub mod parsers;
pub mod semisup;
pub mod synthgen;
pub mod textpipe;

pub use error::{Error, Result};
