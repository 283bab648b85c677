//! Provenance-graph anomaly detection toolkit.
//!
//! The pipeline turns audit-event streams into provenance graphs, trains a
//! graph encoder with logic-aware multi-view contrastive learning, and scores
//! entities or whole graphs against a centroid model of benign behavior.
//! Seeded attack simulators (structure / feature pollution and poisoning) are
//! included for robustness evaluation.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`graph`] / [`parse`] — event parsing, graph construction, edge
//!   reduction, cleanup, batching
//! - [`rules`] / [`augment`] — the causality rule table and logic-aware
//!   edge / node / feature augmentation
//! - [`encoder`] — one-hot features, two-layer attention encoder, projection
//!   head, contrastive training with hand-derived gradients
//! - [`detector`] — k-means centroids, normalized nearest-centroid scoring,
//!   threshold calibration
//! - [`adversary`] — the five graph-manipulation attacks
//! - [`metrics`], [`synth`], [`config`], [`artifact`], [`pipeline`] — the
//!   evaluation harness around everything else

pub mod adversary;
pub mod artifact;
pub mod augment;
pub mod config;
pub mod detector;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod parse;
pub mod pipeline;
pub mod rules;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
